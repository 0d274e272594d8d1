#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "tinyvib/error.hpp"
#include "tinyvib/signals.hpp"

namespace fs = std::filesystem;

namespace tinyvib {

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

fs::path sidecar(const fs::path& path) { return fs::path(path.string() + ".meta"); }

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::uint32_t parse_u32(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(s, &used);
    if (used != s.size() || v > 0xFFFFFFFFul) throw std::out_of_range(what);
    return static_cast<std::uint32_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::Format, std::string("manifest: bad ") + what + " '" + s + "'");
  }
}

}  // namespace

void write_raw(const fs::path& path, const TimeSeries& series) {
  series.validate();
  std::string bytes;
  bytes.reserve(series.length() * 12);
  for (std::size_t i = 0; i < series.length(); ++i) {
    for (const auto& axis : series.axes) detail::put_f32(bytes, axis[i]);
  }
  write_file(path, bytes);

  std::ostringstream meta;
  meta.precision(17);
  meta << "format=f32le-interleaved\n"
       << "sample_rate=" << series.sample_rate << "\n"
       << "axes=x,y,z\n"
       << "samples=" << series.length() << "\n";
  write_file(sidecar(path), meta.str());
}

TimeSeries read_raw(const fs::path& path) {
  TimeSeries out;
  std::array<std::size_t, 3> order{0, 1, 2};
  if (fs::exists(sidecar(path))) {
    std::istringstream meta(read_file(sidecar(path)));
    std::string line;
    while (std::getline(meta, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "sample_rate") {
        try {
          out.sample_rate = std::stod(value);
        } catch (const std::exception&) {
          throw Error(ErrorCode::Format, "raw sidecar: bad sample_rate '" + value + "'");
        }
      } else if (key == "axes") {
        // Column order in the file, e.g. "z,x,y".
        if (value.size() != 5 || value[1] != ',' || value[3] != ',') {
          throw Error(ErrorCode::Format, "raw sidecar: bad axes '" + value + "'");
        }
        for (std::size_t c = 0; c < 3; ++c) {
          const char name = value[2 * c];
          if (name < 'x' || name > 'z') throw Error(ErrorCode::Format, "raw sidecar: bad axes '" + value + "'");
          order[c] = static_cast<std::size_t>(name - 'x');
        }
      } else if (key == "format" && value != "f32le-interleaved") {
        throw Error(ErrorCode::Format, "raw sidecar: unsupported format '" + value + "'");
      }
    }
  }
  const std::string bytes = read_file(path);
  if (bytes.size() % 12 != 0) throw Error(ErrorCode::Format, "raw file size is not a multiple of 12 bytes");
  const std::size_t n = bytes.size() / 12;
  for (auto& axis : out.axes) axis.resize(n);
  detail::ByteReader reader(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out.axes[order[c]][i] = reader.f32();
  }
  out.validate();
  return out;
}

void write_manifest(const fs::path& path, std::span<const ManifestEntry> entries) {
  std::ostringstream out;
  out << "# path\tlabel\tsource\tsegment\twindow\n";
  for (const auto& e : entries) {
    out << e.path << '\t' << to_string(e.label) << '\t' << e.origin.source << '\t' << e.origin.segment << '\t'
        << e.origin.window << '\n';
  }
  write_file(path, out.str());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 5) throw Error(ErrorCode::Format, "manifest: expected 5 tab-separated fields: " + line);
    ManifestEntry e;
    e.path = fields[0];
    e.label = parse_label(fields[1]);
    e.origin.source = fields[2];
    e.origin.segment = parse_u32(fields[3], "segment");
    e.origin.window = parse_u32(fields[4], "window");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ManifestEntry> save_dataset(const fs::path& dir, std::span<const TimeSeriesSample> samples) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<ManifestEntry> entries;
  entries.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    std::ostringstream name;
    name << "sample_";
    name.width(6);
    name.fill('0');
    name << i << ".f32";
    write_raw(dir / name.str(), s.series);
    entries.push_back({name.str(), s.label, s.origin});
  }
  write_manifest(dir / "manifest.txt", entries);
  return entries;
}

std::vector<TimeSeriesSample> load_dataset(const fs::path& manifest) {
  const auto entries = read_manifest(manifest);
  const fs::path base = manifest.parent_path();
  std::vector<TimeSeriesSample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    const fs::path p = fs::path(e.path).is_absolute() ? fs::path(e.path) : base / e.path;
    out.push_back({read_raw(p), e.label, e.origin});
  }
  return out;
}

}  // namespace tinyvib
