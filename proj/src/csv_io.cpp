#include "eqface/csv_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "eqface/errors.hpp"

namespace eqface {
namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// Checks the fixed leading columns and the indexed tail `<prefix>0..k-1`;
// returns k.
std::size_t check_header(const std::vector<std::string>& header,
                         const std::vector<std::string>& fixed, const std::string& prefix,
                         std::string_view what) {
  if (header.size() < fixed.size()) {
    throw FormatError(std::string(what) + ": header too short");
  }
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (header[i] != fixed[i]) {
      throw FormatError(std::string(what) + ": expected column '" + fixed[i] + "', found '" +
                        header[i] + "'");
    }
  }
  for (std::size_t i = fixed.size(); i < header.size(); ++i) {
    const std::string expected = prefix + std::to_string(i - fixed.size());
    if (header[i] != expected) {
      throw FormatError(std::string(what) + ": expected column '" + expected + "', found '" +
                        header[i] + "'");
    }
  }
  return header.size() - fixed.size();
}

long long parse_int(std::string_view text, std::string_view context) {
  const std::string s(text);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || errno != 0 || end != s.c_str() + s.size()) {
    throw FormatError(std::string(context) + ": not an integer: '" + s + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(std::string_view text, std::string_view context) {
  const std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw FormatError(std::string(context) + ": not a number: '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open for writing: " + path.string());
  os << content;
  if (!os) throw Error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string dataset_to_csv(const std::vector<EmbeddingSample>& samples) {
  std::ostringstream os;
  os << "sample_id,label,sigma_gt";
  const Eigen::Index d_in = samples.empty() ? 0 : samples.front().x.size();
  for (Eigen::Index i = 0; i < d_in; ++i) os << ",x_" << i;
  os << '\n';
  for (const auto& s : samples) {
    if (s.x.size() != d_in) throw DimensionMismatch("dataset_to_csv: ragged inputs");
    os << s.sample_id << ',' << s.label << ',' << format_double(s.sigma_gt);
    for (Eigen::Index i = 0; i < d_in; ++i) os << ',' << format_double(s.x(i));
    os << '\n';
  }
  return os.str();
}

std::vector<EmbeddingSample> dataset_from_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw FormatError("dataset: missing header");
  const std::size_t d_in =
      check_header(split_fields(lines[0]), {"sample_id", "label", "sigma_gt"}, "x_", "dataset");
  std::vector<EmbeddingSample> out;
  out.reserve(lines.size() - 1);
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto fields = split_fields(lines[l]);
    const std::string ctx = "dataset line " + std::to_string(l + 1);
    if (fields.size() != d_in + 3) throw FormatError(ctx + ": wrong column count");
    EmbeddingSample s;
    const long long id = parse_int(fields[0], ctx);
    const long long label = parse_int(fields[1], ctx);
    if (id < 0 || label < 0) throw FormatError(ctx + ": negative id or label");
    s.sample_id = static_cast<std::uint64_t>(id);
    s.label = static_cast<int>(label);
    s.sigma_gt = parse_double(fields[2], ctx);
    s.x.resize(static_cast<Eigen::Index>(d_in));
    for (std::size_t i = 0; i < d_in; ++i) s.x(i) = parse_double(fields[3 + i], ctx);
    out.push_back(std::move(s));
  }
  return out;
}

std::string features_to_csv(const std::vector<FeatureRecord>& records) {
  std::ostringstream os;
  os << "identity,order,s";
  const Eigen::Index d = records.empty() ? 0 : records.front().f.size();
  for (Eigen::Index i = 0; i < d; ++i) os << ",f_" << i;
  os << '\n';
  for (const auto& r : records) {
    if (r.f.size() != d) throw DimensionMismatch("features_to_csv: ragged features");
    os << r.identity << ',' << r.order << ',' << format_double(r.s);
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << format_double(r.f(i));
    os << '\n';
  }
  return os.str();
}

std::vector<FeatureRecord> features_from_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw FormatError("features: missing header");
  const std::size_t d =
      check_header(split_fields(lines[0]), {"identity", "order", "s"}, "f_", "features");
  std::vector<FeatureRecord> out;
  out.reserve(lines.size() - 1);
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto fields = split_fields(lines[l]);
    const std::string ctx = "features line " + std::to_string(l + 1);
    if (fields.size() != d + 3) throw FormatError(ctx + ": wrong column count");
    FeatureRecord r;
    r.identity = parse_int(fields[0], ctx);
    r.order = parse_int(fields[1], ctx);
    r.s = parse_double(fields[2], ctx);
    r.f.resize(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) r.f(i) = parse_double(fields[3 + i], ctx);
    out.push_back(std::move(r));
  }
  return out;
}

std::string quality_table_to_csv(const QualityTable& table) {
  std::ostringstream os;
  os << "sample_id,s\n";
  for (const auto& [id, s] : table) os << id << ',' << format_double(s) << '\n';
  return os.str();
}

QualityTable quality_table_from_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != "sample_id,s") {
    throw FormatError("quality table: expected header 'sample_id,s'");
  }
  QualityTable table;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto fields = split_fields(lines[l]);
    const std::string ctx = "quality table line " + std::to_string(l + 1);
    if (fields.size() != 2) throw FormatError(ctx + ": wrong column count");
    const long long id = parse_int(fields[0], ctx);
    if (id < 0) throw FormatError(ctx + ": negative sample id");
    table[static_cast<std::uint64_t>(id)] = parse_double(fields[1], ctx);
  }
  return table;
}

std::string training_log_to_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "step,iteration,epoch,mean_loss,lr\n";
  for (const auto& e : log) {
    os << e.step << ',' << e.iteration << ',' << e.epoch << ',' << format_double(e.mean_loss)
       << ',' << format_double(e.lr) << '\n';
  }
  return os.str();
}

}  // namespace eqface
