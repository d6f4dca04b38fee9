#include "pgs/checkpoint.hpp"

#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pgs/error.hpp"

namespace pgs {

std::string format_hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& token) {
  const char* begin = token.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') throw FormatError("not a number: '" + token + "'");
  return v;
}

std::string content_hash(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << data;
  if (!out) throw Error("write failed for " + path.string());
}

namespace {

void check_name(const std::string& name) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
    throw InvalidArgument("checkpoint entry names must be non-empty and contain no whitespace");
  }
}

}  // namespace

void CheckpointWriter::put_mlp(const std::string& name, const Mlp& net) {
  check_name(name);
  std::string s = "mlp " + name + " " + std::to_string(net.dims().size());
  for (int d : net.dims()) s += " " + std::to_string(d);
  s += "\n";
  for (int k = 0; k < net.num_affine(); ++k) {
    const Matrix& w = net.weight(k);
    s += "w";
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) s += " " + format_hex(w(r, c));
    s += "\nb";
    for (Eigen::Index i = 0; i < net.bias(k).size(); ++i) s += " " + format_hex(net.bias(k)(i));
    s += "\n";
  }
  body_ += s;
}

void CheckpointWriter::put_vector(const std::string& name, const Vector& v) {
  check_name(name);
  body_ += "vector " + name + " " + std::to_string(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) body_ += " " + format_hex(v(i));
  body_ += "\n";
}

void CheckpointWriter::put_scalar(const std::string& name, double value) {
  check_name(name);
  body_ += "scalar " + name + " " + format_hex(value) + "\n";
}

void CheckpointWriter::put_string(const std::string& name, const std::string& value) {
  check_name(name);
  if (value.find('\n') != std::string::npos) throw InvalidArgument("checkpoint strings are single-line");
  body_ += "string " + name + " " + value + "\n";
}

std::string CheckpointWriter::str() const {
  return "pgs-checkpoint " + std::to_string(kCheckpointVersion) + "\n" + body_ + "end\n";
}

void CheckpointWriter::save(const std::filesystem::path& path) const { write_file(path, str()); }

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::size_t to_size(const std::string& tok) {
  try {
    const long v = std::stol(tok);
    if (v < 0) throw FormatError("negative size " + tok);
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw FormatError("bad integer '" + tok + "'");
  }
}

}  // namespace

CheckpointReader CheckpointReader::parse(const std::string& text) {
  CheckpointReader r;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty checkpoint");
  {
    auto head = split_ws(line);
    if (head.size() != 2 || head[0] != "pgs-checkpoint") throw FormatError("missing checkpoint header");
    if (to_size(head[1]) != static_cast<std::size_t>(kCheckpointVersion)) {
      throw FormatError("unsupported checkpoint version " + head[1]);
    }
  }
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "mlp") {
      if (tok.size() < 3) throw FormatError("truncated mlp header");
      const std::size_t layers = to_size(tok[2]);
      if (tok.size() != 3 + layers) throw FormatError("mlp header dimension count mismatch");
      std::vector<int> dims;
      for (std::size_t i = 0; i < layers; ++i) dims.push_back(static_cast<int>(to_size(tok[3 + i])));
      Mlp net = Mlp::zeros(dims);
      for (int k = 0; k < net.num_affine(); ++k) {
        std::string wl, bl;
        if (!std::getline(in, wl) || !std::getline(in, bl)) throw FormatError("truncated mlp body");
        auto wt = split_ws(wl);
        auto bt = split_ws(bl);
        Matrix& w = net.weight(k);
        if (wt.empty() || wt[0] != "w" || wt.size() != static_cast<std::size_t>(w.size()) + 1) {
          throw FormatError("bad weight row for layer " + std::to_string(k));
        }
        if (bt.empty() || bt[0] != "b" || bt.size() != static_cast<std::size_t>(net.bias(k).size()) + 1) {
          throw FormatError("bad bias row for layer " + std::to_string(k));
        }
        std::size_t i = 1;
        for (Eigen::Index rr = 0; rr < w.rows(); ++rr)
          for (Eigen::Index cc = 0; cc < w.cols(); ++cc) w(rr, cc) = parse_double(wt[i++]);
        for (Eigen::Index j = 0; j < net.bias(k).size(); ++j) net.bias(k)(j) = parse_double(bt[j + 1]);
      }
      r.mlps_[tok[1]] = std::move(net);
    } else if (tok[0] == "vector") {
      if (tok.size() < 3) throw FormatError("truncated vector entry");
      const std::size_t n = to_size(tok[2]);
      if (tok.size() != 3 + n) throw FormatError("vector length mismatch for " + tok[1]);
      Vector v(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = parse_double(tok[3 + i]);
      r.vectors_[tok[1]] = std::move(v);
    } else if (tok[0] == "scalar") {
      if (tok.size() != 3) throw FormatError("bad scalar entry");
      r.scalars_[tok[1]] = parse_double(tok[2]);
    } else if (tok[0] == "string") {
      if (tok.size() < 2) throw FormatError("bad string entry");
      const std::string prefix = "string " + tok[1];
      r.strings_[tok[1]] = line.size() > prefix.size() + 1 ? line.substr(prefix.size() + 1) : "";
    } else {
      throw FormatError("unknown checkpoint entry '" + tok[0] + "'");
    }
  }
  if (!ended) throw FormatError("checkpoint is missing its end marker");
  return r;
}

CheckpointReader CheckpointReader::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

bool CheckpointReader::has(const std::string& name) const {
  return mlps_.count(name) || vectors_.count(name) || scalars_.count(name) || strings_.count(name);
}

namespace {

template <typename Map>
const typename Map::mapped_type& lookup(const Map& m, const std::string& name, const char* kind) {
  auto it = m.find(name);
  if (it == m.end()) throw FormatError(std::string("checkpoint has no ") + kind + " named '" + name + "'");
  return it->second;
}

}  // namespace

const Mlp& CheckpointReader::mlp(const std::string& name) const { return lookup(mlps_, name, "mlp"); }
const Vector& CheckpointReader::vector(const std::string& name) const {
  return lookup(vectors_, name, "vector");
}
double CheckpointReader::scalar(const std::string& name) const { return lookup(scalars_, name, "scalar"); }
const std::string& CheckpointReader::text(const std::string& name) const {
  return lookup(strings_, name, "string");
}

void save_mlp(const std::filesystem::path& path, const Mlp& net) {
  CheckpointWriter w;
  w.put_mlp("net", net);
  w.save(path);
}

Mlp load_mlp(const std::filesystem::path& path) { return CheckpointReader::load(path).mlp("net"); }

}  // namespace pgs
