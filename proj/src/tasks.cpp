#include "neat/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "neat/errors.hpp"
#include "neat/linalg.hpp"

namespace neat::train {

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::teacher_regression: return "teacher_regression";
    case TaskKind::invariant_shift: return "invariant_shift";
    case TaskKind::csv_classification: return "csv_classification";
  }
  return "unknown";
}

TaskKind parse_task_kind(const std::string& name) {
  for (TaskKind k : {TaskKind::teacher_regression, TaskKind::invariant_shift, TaskKind::csv_classification})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown task kind '" + name +
                    "' (expected teacher_regression, invariant_shift or csv_classification)");
}

namespace {

// Independent random streams derived from one task seed.
enum Stream : std::uint64_t { kWeights = 1, kShift = 2, kInputs = 3, kNoise = 4, kSplit = 5 };

std::mt19937_64 stream(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

Matrix teacher_forward(const Teacher& t, const Matrix& x) {
  Matrix h = x;
  for (std::size_t l = 0; l < t.weights.size(); ++l) {
    h = matmul(t.weights[l], h);
    if (t.relu_between && l + 1 < t.weights.size())
      for (auto& v : h.values()) v = std::max(0.0, v);
  }
  return h;
}

Split take_columns(const Matrix& x, const Matrix& y, std::size_t begin, std::size_t count) {
  Split s;
  s.inputs = Matrix(x.rows(), count);
  s.targets = Matrix(y.rows(), count);
  for (std::size_t j = 0; j < count; ++j) {
    for (std::size_t i = 0; i < x.rows(); ++i) s.inputs(i, j) = x(i, begin + j);
    for (std::size_t i = 0; i < y.rows(); ++i) s.targets(i, j) = y(i, begin + j);
  }
  return s;
}

void add_noise(Matrix& y, double noise, std::mt19937_64 rng) {
  if (noise <= 0.0) return;
  std::normal_distribution<double> dist(0.0, noise);
  for (auto& v : y.values()) v += dist(rng);
}

Dataset make_teacher_task(const TaskSpec& spec) {
  Dataset d;
  d.spec = spec;
  std::vector<std::size_t> widths{spec.d_in};
  widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
  widths.push_back(spec.d_out);

  auto wrng = stream(spec.seed, kWeights);
  auto srng = stream(spec.seed, kShift);
  Teacher teacher;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double std_in = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    Matrix w = gaussian(widths[l + 1], widths[l], std_in, wrng);
    const Matrix g = gaussian(widths[l + 1], widths[l], std_in, srng);
    if (spec.shift != 0.0) w = add(w, scale(g, spec.shift));
    teacher.weights.push_back(std::move(w));
  }

  const std::size_t n = spec.n_train + spec.n_val;
  auto xrng = stream(spec.seed, kInputs);
  const Matrix x = gaussian(spec.d_in, n, 1.0, xrng);
  Matrix y = teacher_forward(teacher, x);
  add_noise(y, spec.noise, stream(spec.seed, kNoise));
  d.train = take_columns(x, y, 0, spec.n_train);
  d.val = take_columns(x, y, spec.n_train, spec.n_val);
  d.reference = std::move(teacher);
  return d;
}

Dataset make_invariant_task(const TaskSpec& spec) {
  Dataset d;
  d.spec = spec;
  auto wrng = stream(spec.seed, kWeights);
  auto srng = stream(spec.seed, kShift);
  const double std_in = 1.0 / std::sqrt(static_cast<double>(spec.d_in));
  const Matrix w0 = gaussian(spec.d_out, spec.d_in, std_in, wrng);
  d.generator = gaussian(spec.d_out, spec.d_in, std_in * spec.shift, srng);
  const Matrix u = linalg::left_singular_basis(w0);
  const Matrix readout = transpose(u);

  const std::size_t n = spec.n_train + spec.n_val;
  auto xrng = stream(spec.seed, kInputs);
  const Matrix x = gaussian(spec.d_in, n, 1.0, xrng);
  Matrix z = matmul(readout, matmul(add(w0, d.generator), x));
  add_noise(z, spec.noise, stream(spec.seed, kNoise));
  d.train = take_columns(x, z, 0, spec.n_train);
  d.val = take_columns(x, z, spec.n_train, spec.n_val);
  d.reference = Teacher{{w0, readout}, false};
  return d;
}

Dataset make_csv_task(const TaskSpec& spec) {
  const CsvTable table = read_classification_csv(spec.csv_path);
  const std::size_t rows = table.features.size();
  if (spec.n_val == 0 || spec.n_val >= rows)
    throw ConfigError("task.n_val must be in [1, " + std::to_string(rows - 1) + "] for " + spec.csv_path);

  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), 0);
  auto rng = stream(spec.seed, kSplit);
  std::shuffle(order.begin(), order.end(), rng);

  Dataset d;
  d.spec = spec;
  d.spec.d_in = table.features.front().size();
  d.classes = *std::max_element(table.labels.begin(), table.labels.end()) + 1;
  d.spec.d_out = d.classes;
  d.spec.n_val = spec.n_val;
  d.spec.n_train = rows - spec.n_val;

  auto fill = [&](Split& s, std::size_t begin, std::size_t count) {
    s.inputs = Matrix(d.spec.d_in, count);
    s.labels.resize(count);
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t row = order[begin + j];
      for (std::size_t i = 0; i < d.spec.d_in; ++i) s.inputs(i, j) = table.features[row][i];
      s.labels[j] = table.labels[row];
    }
  };
  fill(d.train, 0, d.spec.n_train);
  fill(d.val, d.spec.n_train, d.spec.n_val);
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable read_classification_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open CSV file '" + path + "'", 0);
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) {
      if (line_no == 1) throw ParseError("missing header row", line_no);
      continue;
    }
    auto fields = split_fields(line);
    if (line_no == 1) {
      if (fields.size() < 2) throw ParseError("header needs at least one feature and a label column", line_no);
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size())
      throw ParseError("expected " + std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    std::vector<double> row;
    for (std::size_t i = 0; i + 1 < fields.size(); ++i) {
      const std::string& f = fields[i];
      if (f.empty()) throw ParseError("missing value in column '" + table.header[i] + "'", line_no);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v))
        throw ParseError("'" + f + "' is not a decimal number (column '" + table.header[i] + "')", line_no);
      row.push_back(v);
    }
    const std::string& lf = fields.back();
    if (lf.empty()) throw ParseError("missing class label", line_no);
    std::size_t label = 0;
    auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (ec != std::errc() || ptr != lf.data() + lf.size())
      throw ParseError("class label '" + lf + "' is not a nonnegative integer", line_no);
    table.features.push_back(std::move(row));
    table.labels.push_back(label);
  }
  if (table.header.empty()) throw ParseError("empty CSV file '" + path + "'", 0);
  if (table.features.size() < 2) throw ParseError("CSV file '" + path + "' needs at least two data rows", line_no);
  return table;
}

Dataset make_task(const TaskSpec& spec) {
  if (spec.kind != TaskKind::csv_classification) {
    if (spec.d_in == 0 || spec.d_out == 0) throw ConfigError("task dimensions must be >= 1");
    if (spec.n_train == 0 || spec.n_val == 0) throw ConfigError("task sample counts must be >= 1");
    if (!(spec.noise >= 0.0)) throw ConfigError("task.noise must be >= 0");
    for (std::size_t h : spec.hidden)
      if (h == 0) throw ConfigError("task hidden widths must be >= 1");
  }
  switch (spec.kind) {
    case TaskKind::teacher_regression: return make_teacher_task(spec);
    case TaskKind::invariant_shift: return make_invariant_task(spec);
    case TaskKind::csv_classification: return make_csv_task(spec);
  }
  throw ConfigError("unknown task kind");
}

}  // namespace neat::train
