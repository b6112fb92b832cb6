#include "parbci/mdm.hpp"
#include "parbci/text_io.hpp"

#include <sstream>
#include <stdexcept>

namespace parbci {

namespace {

constexpr const char* kMagic = "parbci-model";
constexpr int kVersion = 1;

[[noreturn]] void malformed(const std::string& why) { throw std::runtime_error("malformed model snapshot: " + why); }

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

} // namespace

std::string serialize_model(const MiModel& m) {
  m.validate();
  std::ostringstream os;
  os << kMagic << ' ' << kVersion << '\n';
  os << "dim " << m.dim() << '\n';
  os << "alpha " << format_double(m.adaptation_alpha) << '\n';
  os << "period " << m.adaptation_period << '\n';
  os << "classes " << m.classes.size() << '\n';
  for (std::size_t k = 0; k < m.classes.size(); ++k) {
    os << "prototype " << m.classes[k] << '\n';
    const Matrix& p = m.prototypes[k].entries();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) os << (j ? " " : "") << format_double(p(i, j));
      os << '\n';
    }
  }
  os << "end\n";
  return os.str();
}

MiModel parse_model(const std::string& text) {
  std::vector<std::string> lines;
  {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
  }
  std::size_t pos = 0;
  auto next = [&](const char* what) {
    if (pos >= lines.size()) malformed(std::string("truncated before ") + what);
    return fields(lines[pos++]);
  };
  auto keyed = [&](const char* key) {
    const auto f = next(key);
    if (f.size() != 2 || f[0] != key) malformed(std::string("expected '") + key + "'");
    return f[1];
  };

  try {
    const auto head = next("header");
    if (head.size() != 2 || head[0] != kMagic) malformed("missing header");
    if (parse_int(head[1]) != kVersion) {
      throw std::runtime_error("model snapshot version mismatch: file has " + head[1] + ", expected " +
                               std::to_string(kVersion));
    }
    MiModel m;
    const auto dim = parse_int(keyed("dim"));
    if (dim < 1) malformed("dim must be positive");
    m.adaptation_alpha = parse_double(keyed("alpha"));
    m.adaptation_period = static_cast<int>(parse_int(keyed("period")));
    const auto count = parse_int(keyed("classes"));
    if (count < 1) malformed("class count must be positive");
    for (long long k = 0; k < count; ++k) {
      m.classes.push_back(keyed("prototype"));
      Matrix p(dim, dim);
      for (long long i = 0; i < dim; ++i) {
        const auto row = next("prototype row");
        if (static_cast<long long>(row.size()) != dim) malformed("prototype row has wrong length");
        for (long long j = 0; j < dim; ++j) p(i, j) = parse_double(row[static_cast<std::size_t>(j)]);
      }
      m.prototypes.emplace_back(p);
    }
    const auto tail = next("end");
    if (tail.size() != 1 || tail[0] != "end") malformed("missing end marker");
    m.pending.assign(m.classes.size(), {});
    m.validate();
    return m;
  } catch (const std::invalid_argument& e) {
    malformed(e.what());
  }
}

void snapshot_model(const MiModel& m, const std::string& path) { write_text_file(path, serialize_model(m)); }

MiModel load_model(const std::string& path) {
  const auto lines = read_lines(path);
  std::string text;
  for (const auto& l : lines) text += l + '\n';
  return parse_model(text);
}

} // namespace parbci
