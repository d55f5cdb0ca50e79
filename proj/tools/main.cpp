#include "dapair/cli.hpp"

int main(int argc, char** argv) { return dapair::run_cli(argc, argv); }
