#include "parbci/pupil.hpp"
#include "parbci/text_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace parbci {

namespace fs = std::filesystem;

void write_trace_csv(const std::string& path, std::span<const PupilSample> trace) {
  std::ostringstream os;
  os << "parbci-pupil,1\n";
  os << "timestamp,area,valid\n";
  for (const auto& s : trace) {
    os << format_double(s.timestamp) << ',' << format_double(s.area) << ',' << (s.valid ? 1 : 0) << '\n';
  }
  write_text_file(path, os.str());
}

namespace {

std::vector<PupilSample> parse_trace(const std::string& path, const std::vector<std::string>& lines) {
  if (lines.size() < 2 || lines[0] != "parbci-pupil,1") {
    throw std::runtime_error(path + ": not a version-1 pupil trace");
  }
  if (lines[1] != "timestamp,area,valid") throw std::runtime_error(path + ": bad column header");
  std::vector<PupilSample> out;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 3) throw std::runtime_error(path + ": row " + std::to_string(i + 1) + " has wrong field count");
    out.push_back({parse_double(f[0]), parse_double(f[1]), parse_int(f[2]) != 0});
  }
  return out;
}

} // namespace

std::vector<PupilSample> read_trace_csv(const std::string& path) {
  return with_file_context(path, [&] { return parse_trace(path, read_lines(path)); });
}

void write_pgm(const std::string& path, const EyeFrame& frame) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "P5\n# t=" << format_double(frame.timestamp) << '\n'
      << frame.width << ' ' << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.intensity.data()),
            static_cast<std::streamsize>(frame.intensity.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

namespace {

// Next whitespace-delimited header token, collecting "# t=" comments.
std::string pgm_token(std::istream& in, double& timestamp) {
  std::string tok;
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
      if (comment.rfind("# t=", 0) == 0) timestamp = parse_double(comment.substr(4));
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  in >> tok;
  return tok;
}

} // namespace

EyeFrame read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  EyeFrame f;
  if (pgm_token(in, f.timestamp) != "P5") throw std::runtime_error(path + ": not a binary PGM");
  f.width = static_cast<int>(parse_int(pgm_token(in, f.timestamp)));
  f.height = static_cast<int>(parse_int(pgm_token(in, f.timestamp)));
  const auto maxval = parse_int(pgm_token(in, f.timestamp));
  if (maxval != 255 || f.width <= 0 || f.height <= 0) throw std::runtime_error(path + ": unsupported PGM header");
  in.get(); // single whitespace before raster
  f.intensity.resize(static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height));
  in.read(reinterpret_cast<char*>(f.intensity.data()), static_cast<std::streamsize>(f.intensity.size()));
  if (in.gcount() != static_cast<std::streamsize>(f.intensity.size())) {
    throw std::runtime_error(path + ": truncated PGM raster");
  }
  return f;
}

void write_frame_sequence(const std::string& dir, std::span<const EyeFrame> frames) {
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (!(frames[i].timestamp > frames[i - 1].timestamp)) {
      throw std::invalid_argument("write_frame_sequence: frame timestamps must be strictly increasing");
    }
  }
  fs::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::snprintf(name, sizeof(name), "frame_%06zu.pgm", i);
    write_pgm((fs::path(dir) / name).string(), frames[i]);
  }
}

std::vector<EyeFrame> read_frame_sequence(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("frame_", 0) == 0 && entry.path().extension() == ".pgm") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<EyeFrame> out;
  out.reserve(files.size());
  for (const auto& p : files) out.push_back(read_pgm(p.string()));
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (!(out[i].timestamp > out[i - 1].timestamp)) {
      throw std::runtime_error(dir + ": frame timestamps are not strictly increasing");
    }
  }
  return out;
}

} // namespace parbci
