#include "parbci/eeg.hpp"
#include "parbci/text_io.hpp"

#include <sstream>
#include <stdexcept>

namespace parbci {

namespace {
constexpr const char* kMagic = "parbci-eeg";
constexpr int kVersion = 1;
} // namespace

void write_stream_csv(const std::string& path, const EegStream& stream) {
  stream.validate();
  std::ostringstream os;
  os << kMagic << ',' << kVersion << ',' << format_double(stream.fs) << '\n';
  os << "label";
  for (int ch = 0; ch < stream.channels(); ++ch) {
    os << ',';
    if (stream.channel_names.empty()) os << "ch" << ch;
    else os << stream.channel_names[static_cast<std::size_t>(ch)];
  }
  os << '\n';
  for (Eigen::Index t = 0; t < stream.length(); ++t) {
    os << (stream.label_track.empty() ? kIdle : stream.label_track[static_cast<std::size_t>(t)]);
    for (int ch = 0; ch < stream.channels(); ++ch) os << ',' << format_double(stream.samples(ch, t));
    os << '\n';
  }
  write_text_file(path, os.str());
}

namespace {

EegStream parse_stream(const std::string& path, const std::vector<std::string>& lines) {
  if (lines.size() < 2) throw std::runtime_error(path + ": malformed EEG stream (missing header)");
  const auto head = split(lines[0], ',');
  if (head.size() != 3 || head[0] != kMagic) throw std::runtime_error(path + ": not an EEG stream file");
  if (parse_int(head[1]) != kVersion) {
    throw std::runtime_error(path + ": unsupported EEG stream version " + head[1]);
  }
  EegStream s;
  s.fs = parse_double(head[2]);
  const auto cols = split(lines[1], ',');
  if (cols.size() < 2 || cols[0] != "label") throw std::runtime_error(path + ": bad column header");
  s.channel_names.assign(cols.begin() + 1, cols.end());
  const auto channels = static_cast<Eigen::Index>(s.channel_names.size());

  std::size_t rows = lines.size() - 2;
  while (rows > 0 && lines[rows + 1].empty()) --rows;
  s.samples.resize(channels, static_cast<Eigen::Index>(rows));
  s.label_track.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto f = split(lines[r + 2], ',');
    if (static_cast<Eigen::Index>(f.size()) != channels + 1) {
      throw std::runtime_error(path + ": row " + std::to_string(r + 3) + " has wrong field count");
    }
    s.label_track.push_back(f[0]);
    for (Eigen::Index ch = 0; ch < channels; ++ch) {
      s.samples(ch, static_cast<Eigen::Index>(r)) = parse_double(f[static_cast<std::size_t>(ch + 1)]);
    }
  }
  s.validate();
  return s;
}
} // namespace

EegStream read_stream_csv(const std::string& path) {
  return with_file_context(path, [&] { return parse_stream(path, read_lines(path)); });
}

} // namespace parbci
