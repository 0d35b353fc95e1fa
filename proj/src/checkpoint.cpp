#include "eqface/checkpoint.hpp"

#include <map>
#include <set>
#include <sstream>

#include "eqface/csv_io.hpp"
#include "eqface/errors.hpp"

namespace eqface {
namespace {

template <typename T>
void write_tensor(std::ostringstream& os, const std::string& name, const T& t,
                  std::string_view role, bool frozen) {
  os << "tensor " << name << " shape=" << t.rows() << 'x' << t.cols() << " role=" << role
     << " frozen=" << (frozen ? 1 : 0) << '\n';
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      if (c > 0) os << ' ';
      os << format_double(t(r, c));
    }
    os << '\n';
  }
}

// "key=value" -> value, or FormatError.
std::string take_value(const std::string& token, std::string_view key, int line) {
  const std::string prefix = std::string(key) + "=";
  if (token.rfind(prefix, 0) != 0) {
    throw FormatError("checkpoint line " + std::to_string(line) + ": expected '" + prefix +
                      "...', found '" + token + "'");
  }
  return token.substr(prefix.size());
}

int parse_positive(const std::string& text, int line) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || v < 0) {
    throw FormatError("checkpoint line " + std::to_string(line) + ": bad integer '" + text + "'");
  }
  return v;
}

struct ParsedTensor {
  std::string role;
  bool frozen = false;
  Mat values;
};

template <typename T>
void assign_tensor(std::map<std::string, ParsedTensor>& parsed, const std::string& name,
                   T& target, std::set<std::string>& used) {
  auto it = parsed.find(name);
  if (it == parsed.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
  const Mat& m = it->second.values;
  if (m.rows() != target.rows() || m.cols() != target.cols()) {
    throw FormatError("checkpoint: tensor '" + name + "' has shape " + std::to_string(m.rows()) +
                      "x" + std::to_string(m.cols()) + ", expected " +
                      std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) target(r, c) = m(r, c);
  }
  used.insert(name);
}

}  // namespace

std::string checkpoint_to_string(const Model& model) {
  std::ostringstream os;
  const auto& d = model.dims;
  os << kCheckpointVersion << '\n';
  os << "dims d_in=" << d.d_in << " hidden=" << d.hidden << " d=" << d.d << " q=" << d.q
     << " n_classes=" << d.n_classes << '\n';
  model.backbone.for_each([&](std::string_view n, const auto& t) {
    write_tensor(os, "backbone." + std::string(n), t, "backbone", model.frozen.backbone);
  });
  model.quality.for_each([&](std::string_view n, const auto& t) {
    write_tensor(os, "quality." + std::string(n), t, "quality", model.frozen.quality);
  });
  write_tensor(os, "quality.running_mean", model.bn.running_mean, "quality_state",
               model.frozen.quality);
  write_tensor(os, "quality.running_var", model.bn.running_var, "quality_state",
               model.frozen.quality);
  model.classifier.for_each([&](std::string_view n, const auto& t) {
    write_tensor(os, "classifier." + std::string(n), t, "classifier", model.frozen.classifier);
  });
  os << "end\n";
  return os.str();
}

Model checkpoint_from_string(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };

  if (!next_line() || line != kCheckpointVersion) {
    throw FormatError(std::string("checkpoint: expected first line '") + kCheckpointVersion + "'");
  }
  if (!next_line()) throw FormatError("checkpoint: missing dims line");
  ModelDims dims;
  {
    std::istringstream ls(line);
    std::string tag, a, b, c, q, n;
    ls >> tag >> a >> b >> c >> q >> n;
    if (tag != "dims") throw FormatError("checkpoint line 2: expected 'dims'");
    dims.d_in = parse_positive(take_value(a, "d_in", line_no), line_no);
    dims.hidden = parse_positive(take_value(b, "hidden", line_no), line_no);
    dims.d = parse_positive(take_value(c, "d", line_no), line_no);
    dims.q = parse_positive(take_value(q, "q", line_no), line_no);
    dims.n_classes = parse_positive(take_value(n, "n_classes", line_no), line_no);
    std::string extra;
    if (ls >> extra) throw FormatError("checkpoint line 2: trailing token '" + extra + "'");
    try {
      dims.validate();
    } catch (const Error& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    }
  }

  std::map<std::string, ParsedTensor> parsed;
  bool saw_end = false;
  while (next_line()) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string tag, name, shape, role, frozen;
    ls >> tag >> name >> shape >> role >> frozen;
    if (tag != "tensor" || name.empty()) {
      throw FormatError("checkpoint line " + std::to_string(line_no) + ": expected 'tensor'");
    }
    const std::string shape_v = take_value(shape, "shape", line_no);
    const auto x = shape_v.find('x');
    if (x == std::string::npos) {
      throw FormatError("checkpoint line " + std::to_string(line_no) + ": bad shape");
    }
    const int rows = parse_positive(shape_v.substr(0, x), line_no);
    const int cols = parse_positive(shape_v.substr(x + 1), line_no);
    ParsedTensor t;
    t.role = take_value(role, "role", line_no);
    const std::string fz = take_value(frozen, "frozen", line_no);
    if (fz != "0" && fz != "1") {
      throw FormatError("checkpoint line " + std::to_string(line_no) + ": frozen must be 0 or 1");
    }
    t.frozen = fz == "1";
    t.values.resize(rows, cols);
    for (int r = 0; r < rows; ++r) {
      if (!next_line()) throw FormatError("checkpoint: truncated tensor '" + name + "'");
      std::istringstream vs(line);
      std::string tok;
      int c = 0;
      while (vs >> tok) {
        if (c >= cols) {
          throw FormatError("checkpoint line " + std::to_string(line_no) + ": too many values");
        }
        t.values(r, c++) = parse_double(tok, "checkpoint line " + std::to_string(line_no));
      }
      if (c != cols) {
        throw FormatError("checkpoint line " + std::to_string(line_no) + ": too few values");
      }
    }
    if (!parsed.emplace(name, std::move(t)).second) {
      throw FormatError("checkpoint: duplicate tensor '" + name + "'");
    }
  }
  if (!saw_end) throw FormatError("checkpoint: missing 'end'");
  if (next_line()) {
    throw FormatError("checkpoint line " + std::to_string(line_no) + ": content after 'end'");
  }

  // Build a correctly shaped model, then overwrite every tensor.
  Model m = init_model(dims, 0);
  std::set<std::string> used;
  m.backbone.for_each([&](std::string_view n, auto& t) {
    assign_tensor(parsed, "backbone." + std::string(n), t, used);
  });
  m.quality.for_each([&](std::string_view n, auto& t) {
    assign_tensor(parsed, "quality." + std::string(n), t, used);
  });
  assign_tensor(parsed, "quality.running_mean", m.bn.running_mean, used);
  assign_tensor(parsed, "quality.running_var", m.bn.running_var, used);
  m.classifier.for_each([&](std::string_view n, auto& t) {
    assign_tensor(parsed, "classifier." + std::string(n), t, used);
  });
  for (const auto& [name, t] : parsed) {
    if (!used.contains(name)) throw FormatError("checkpoint: unknown tensor '" + name + "'");
  }
  auto flag = [&](const std::string& name) { return parsed.at(name).frozen; };
  m.frozen.backbone = flag("backbone.w1");
  m.frozen.quality = flag("quality.w1");
  m.frozen.classifier = flag("classifier.w");
  return m;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_text_file(path, checkpoint_to_string(model));
}

Model load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_string(read_text_file(path));
}

}  // namespace eqface
