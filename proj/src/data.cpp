#include "dapair/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

namespace dapair {

namespace {

constexpr std::size_t kFeatures = 2;

// Sub-seeds for the independently drawn member sets of a DomainDataset.
enum class DataPart : std::uint64_t { source_train = 11, pair_pool = 12, source_val = 13, target_val = 14 };

std::uint64_t part_seed(std::uint64_t seed, DataPart part) {
  return mix_seed(seed, static_cast<std::uint64_t>(part));
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(std::string_view text, std::string_view what) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw DomainError(fmt::format("cannot parse '{}' as a number in {}", t, what));
  }
  return value;
}

std::string format_double(double v) { return fmt::format("{}", v); }

void apply_step(std::vector<double>& xy, const Stretch& s) {
  const std::size_t axis = static_cast<std::size_t>(s.axis);
  for (std::size_t i = axis; i < xy.size(); i += kFeatures) xy[i] *= s.factor;
}

void apply_step(std::vector<double>& xy, const Rotate& r) {
  const double theta = r.degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  for (std::size_t i = 0; i + 1 < xy.size(); i += kFeatures) {
    const double x = xy[i], y = xy[i + 1];
    xy[i] = c * x - s * y;
    xy[i + 1] = s * x + c * y;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ShiftSpec

ShiftSpec ShiftSpec::two_moons_default() {
  return ShiftSpec{{Stretch{Axis::y, 1.5}, Rotate{-45.0}}};
}

ShiftSpec ShiftSpec::parse(std::string_view text) {
  ShiftSpec spec;
  std::string body = trim(text);
  if (body.empty() || body == "none") return spec;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ';')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto open = item.find('(');
    const auto close = item.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open) {
      throw DomainError(fmt::format("malformed shift step '{}'", item));
    }
    const std::string name = trim(std::string_view(item).substr(0, open));
    const std::string args = item.substr(open + 1, close - open - 1);
    if (name == "rotate") {
      spec.steps.emplace_back(Rotate{parse_double(args, "rotate()")});
    } else if (name == "stretch") {
      const auto comma = args.find(',');
      if (comma == std::string::npos) {
        throw DomainError(fmt::format("stretch needs (axis,factor), got '{}'", item));
      }
      const std::string axis = trim(std::string_view(args).substr(0, comma));
      if (axis != "x" && axis != "y") throw DomainError(fmt::format("unknown axis '{}'", axis));
      spec.steps.emplace_back(Stretch{axis == "x" ? Axis::x : Axis::y,
                                      parse_double(std::string_view(args).substr(comma + 1),
                                                   "stretch()")});
    } else {
      throw DomainError(fmt::format("unknown shift step '{}'", name));
    }
  }
  spec.validate();
  return spec;
}

std::string ShiftSpec::to_string() const {
  std::string out;
  for (const auto& step : steps) {
    if (!out.empty()) out += ';';
    if (const auto* s = std::get_if<Stretch>(&step)) {
      out += fmt::format("stretch({},{})", s->axis == Axis::x ? "x" : "y", format_double(s->factor));
    } else {
      out += fmt::format("rotate({})", format_double(std::get<Rotate>(step).degrees));
    }
  }
  return out;
}

void ShiftSpec::validate() const {
  for (const auto& step : steps) {
    if (const auto* s = std::get_if<Stretch>(&step)) {
      if (!(s->factor > 0.0) || !std::isfinite(s->factor)) {
        throw DomainError(fmt::format("stretch factor must be > 0, got {}", s->factor));
      }
    } else if (!std::isfinite(std::get<Rotate>(step).degrees)) {
      throw DomainError("rotation angle must be finite");
    }
  }
}

// ---------------------------------------------------------------------------
// Generation and transforms

LabeledSet make_two_moons(std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n < 2) throw DomainError(fmt::format("make_two_moons needs n >= 2, got {}", n));
  if (!(noise_sigma >= 0.0)) throw DomainError("noise sigma must be >= 0");

  const std::size_t n_upper = (n + 1) / 2;
  const std::size_t n_lower = n / 2;
  std::vector<double> xy(n * kFeatures);
  std::vector<int> labels(n);

  auto arc_t = [](std::size_t i, std::size_t count) {
    return count <= 1 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  for (std::size_t i = 0; i < n_upper; ++i) {
    const double t = arc_t(i, n_upper);
    xy[2 * i] = std::cos(t);
    xy[2 * i + 1] = std::sin(t);
    labels[i] = 0;
  }
  for (std::size_t i = 0; i < n_lower; ++i) {
    const double t = arc_t(i, n_lower);
    const std::size_t r = n_upper + i;
    xy[2 * r] = 1.0 - std::cos(t);
    xy[2 * r + 1] = 1.0 - std::sin(t) - 0.5;
    labels[r] = 1;
  }
  if (noise_sigma > 0.0) {
    Rng rng(seed, Stream::data);
    for (double& v : xy) v += noise_sigma * rng.normal();
  }
  return LabeledSet{Tensor({n, kFeatures}, std::move(xy)), std::move(labels)};
}

Tensor MinMaxParams::apply(const Tensor& x) const {
  if (x.cols() != mins.size()) {
    throw DimensionError(fmt::format("normalization fitted on {} features, applied to {}", mins.size(),
                                     x.shape().to_string()));
  }
  const std::size_t cols = x.cols();
  std::vector<double> out(x.size());
  const auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = i % cols;
    out[i] = (v[i] - mins[c]) / (maxs[c] - mins[c]) - 0.5;
  }
  return Tensor(x.shape(), std::move(out));
}

std::pair<Tensor, MinMaxParams> minmax_normalize(const Tensor& x) {
  const std::size_t cols = x.cols();
  if (x.rows() == 0) throw DegenerateFeatureError("cannot normalize an empty feature matrix");
  MinMaxParams params{std::vector<double>(cols), std::vector<double>(cols)};
  for (std::size_t c = 0; c < cols; ++c) {
    double lo = x(0, c), hi = x(0, c);
    for (std::size_t r = 1; r < x.rows(); ++r) {
      lo = std::min(lo, x(r, c));
      hi = std::max(hi, x(r, c));
    }
    if (!(hi > lo)) throw DegenerateFeatureError(fmt::format("feature {} is constant ({})", c, lo));
    params.mins[c] = lo;
    params.maxs[c] = hi;
  }
  Tensor normalized = params.apply(x);
  return {std::move(normalized), std::move(params)};
}

Tensor apply_shift(const Tensor& x, const ShiftSpec& spec) {
  if (x.cols() != kFeatures) {
    throw DimensionError("apply_shift expects N×2 features, got " + x.shape().to_string());
  }
  std::vector<double> xy(x.values().begin(), x.values().end());
  for (const auto& step : spec.steps) std::visit([&](const auto& s) { apply_step(xy, s); }, step);
  return Tensor(x.shape(), std::move(xy));
}

DomainDataset build_domain_datasets(const DataSpec& spec, std::uint64_t seed) {
  for (auto [count, name] : {std::pair{spec.n_train, "n_train"}, std::pair{spec.n_pairs, "n_pairs"},
                             std::pair{spec.n_val, "n_val"}}) {
    if (count < 2) throw DomainError(fmt::format("{} must be >= 2, got {}", name, count));
  }
  spec.shift.validate();

  DomainDataset data;
  data.shift = spec.shift;
  LabeledSet train = make_two_moons(spec.n_train, spec.noise_sigma, part_seed(seed, DataPart::source_train));
  auto [train_features, params] = minmax_normalize(train.features);
  data.source_train = LabeledSet{std::move(train_features), std::move(train.labels)};
  data.normalization = params;

  // The pair pool is a second, disjoint draw whose labels are discarded.
  LabeledSet pool = make_two_moons(spec.n_pairs, spec.noise_sigma, part_seed(seed, DataPart::pair_pool));
  data.pair_pool_source = params.apply(pool.features);
  data.pair_pool_target = apply_shift(data.pair_pool_source, spec.shift);

  LabeledSet sval = make_two_moons(spec.n_val, spec.noise_sigma, part_seed(seed, DataPart::source_val));
  data.source_val = LabeledSet{params.apply(sval.features), std::move(sval.labels)};

  LabeledSet tval = make_two_moons(spec.n_val, spec.noise_sigma, part_seed(seed, DataPart::target_val));
  data.target_val = LabeledSet{apply_shift(params.apply(tval.features), spec.shift), std::move(tval.labels)};
  return data;
}

// ---------------------------------------------------------------------------
// Batching

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  const std::size_t cols = x.cols();
  std::vector<double> out(indices.size() * cols);
  const auto v = x.values();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= x.rows()) throw ContractError("gather_rows: index out of range");
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(indices[r] * cols), cols,
                out.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return Tensor({indices.size(), cols}, std::move(out));
}

BatchSampler::BatchSampler(const DomainDataset& data, std::uint64_t batching_seed, std::uint64_t da_seed)
    : data_(&data), batching_(batching_seed, Stream::batching), da_(da_seed, Stream::da) {
  epoch_order_.resize(data.source_train.size());
  std::iota(epoch_order_.begin(), epoch_order_.end(), std::size_t{0});
  cursor_ = epoch_order_.size();
  pair_indices_.resize(data.pair_pool_source.rows());
  std::iota(pair_indices_.begin(), pair_indices_.end(), std::size_t{0});
  source_indices_ = pair_indices_;
  target_indices_.resize(data.pair_pool_target.rows());
  std::iota(target_indices_.begin(), target_indices_.end(), std::size_t{0});
}

void BatchSampler::begin_epoch() {
  // Fisher-Yates with our own index draw so the order only depends on the stream.
  for (std::size_t i = epoch_order_.size(); i > 1; --i) {
    std::swap(epoch_order_[i - 1], epoch_order_[batching_.index(i)]);
  }
  cursor_ = 0;
}

std::size_t BatchSampler::batches_per_epoch(std::size_t size) const {
  if (size == 0) throw ContractError("batch size must be >= 1");
  return (data_->source_train.size() + size - 1) / size;
}

Batch BatchSampler::next_classification(std::size_t size) {
  if (cursor_ >= epoch_order_.size()) begin_epoch();
  const std::size_t take = std::min(size, epoch_order_.size() - cursor_);
  Batch batch;
  batch.indices.assign(epoch_order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       epoch_order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
  cursor_ += take;
  batch.features = gather_rows(data_->source_train.features, batch.indices);
  batch.labels.reserve(take);
  for (std::size_t i : batch.indices) batch.labels.push_back(data_->source_train.labels[i]);
  return batch;
}

std::vector<std::size_t> BatchSampler::draw_distinct(std::vector<std::size_t>& pool, std::size_t size) {
  // Partial Fisher-Yates over a persistent index array: the first `size` slots
  // are a uniform draw without replacement regardless of the array's prior order.
  for (std::size_t i = 0; i < size; ++i) {
    std::swap(pool[i], pool[i + da_.index(pool.size() - i)]);
  }
  return {pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(size)};
}

Batch BatchSampler::sample(BatchKind kind, std::size_t size) {
  if (size == 0) throw ContractError("batch size must be >= 1");
  auto check_pool = [&](std::size_t pool, const char* name) {
    if (size > pool) {
      throw ContractError(fmt::format("batch of {} exceeds the {} ({} rows)", size, name, pool));
    }
  };
  Batch batch;
  switch (kind) {
    case BatchKind::classification:
      check_pool(data_->source_train.size(), "labeled training set");
      return next_classification(size);
    case BatchKind::paired:
      check_pool(pair_indices_.size(), "pair pool");
      batch.indices = draw_distinct(pair_indices_, size);
      batch.features = gather_rows(data_->pair_pool_source, batch.indices);
      batch.partner = gather_rows(data_->pair_pool_target, batch.indices);
      return batch;
    case BatchKind::unpaired_source:
      check_pool(source_indices_.size(), "source pair pool");
      batch.indices = draw_distinct(source_indices_, size);
      batch.features = gather_rows(data_->pair_pool_source, batch.indices);
      return batch;
    case BatchKind::unpaired_target:
      check_pool(target_indices_.size(), "target pair pool");
      batch.indices = draw_distinct(target_indices_, size);
      batch.features = gather_rows(data_->pair_pool_target, batch.indices);
      return batch;
  }
  throw ContractError("unknown batch kind");
}

// ---------------------------------------------------------------------------
// CSV

void write_csv(const std::filesystem::path& path, const Tensor& features, const std::vector<int>* labels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  for (std::size_t c = 0; c < features.cols(); ++c) out << (c ? ",x" : "x") << c;
  if (labels) out << ",label";
  out << '\n';
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < features.cols(); ++c) {
      if (c) out << ',';
      out << format_double(features(r, c));
    }
    if (labels) out << ',' << (*labels)[r];
    out << '\n';
  }
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

LabeledSet read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(fmt::format("'{}' is empty", path.string()));
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) header.push_back(trim(field));
  }
  const bool has_labels = !header.empty() && header.back() == "label";
  const std::size_t cols = header.size() - (has_labels ? 1 : 0);

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::size_t c = 0;
    while (std::getline(ss, field, ',')) {
      const std::string where = fmt::format("{} line {}", path.string(), rows + 2);
      if (c < cols) {
        values.push_back(parse_double(field, where));
      } else if (has_labels && c == cols) {
        labels.push_back(static_cast<int>(parse_double(field, where)));
      }
      ++c;
    }
    if (c != header.size()) {
      throw DimensionError(fmt::format("{} line {}: expected {} fields, got {}", path.string(), rows + 2,
                                       header.size(), c));
    }
    ++rows;
  }
  if (!has_labels) labels.assign(rows, 0);
  return LabeledSet{Tensor({rows, cols}, std::move(values)), std::move(labels)};
}

void export_dataset(const DomainDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_csv(dir / "source_train.csv", data.source_train.features, &data.source_train.labels);
  write_csv(dir / "pair_source.csv", data.pair_pool_source);
  write_csv(dir / "pair_target.csv", data.pair_pool_target);
  write_csv(dir / "source_val.csv", data.source_val.features, &data.source_val.labels);
  write_csv(dir / "target_val.csv", data.target_val.features, &data.target_val.labels);
}

DomainDataset import_dataset(const std::filesystem::path& dir) {
  DomainDataset data;
  data.source_train = read_csv(dir / "source_train.csv");
  data.pair_pool_source = read_csv(dir / "pair_source.csv").features;
  data.pair_pool_target = read_csv(dir / "pair_target.csv").features;
  data.source_val = read_csv(dir / "source_val.csv");
  data.target_val = read_csv(dir / "target_val.csv");
  if (data.pair_pool_source.shape() != data.pair_pool_target.shape()) {
    throw PairingError("pair pool halves differ in shape");
  }
  return data;
}

}  // namespace dapair
