#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pgs/numerics.hpp"

namespace pgs {

// Text container for networks and their side data. Doubles are written as
// hexadecimal floating point so a save/load round trip is bit-exact.
//
//   pgs-checkpoint 1
//   mlp <name> <num_layers> <d0> ... <dL>
//   w <row-major weights of layer 0>
//   b <bias of layer 0>
//   ...
//   vector <name> <n> <values>
//   scalar <name> <value>
//   string <name> <text to end of line>
//   end
inline constexpr int kCheckpointVersion = 1;

class CheckpointWriter {
 public:
  void put_mlp(const std::string& name, const Mlp& net);
  void put_vector(const std::string& name, const Vector& v);
  void put_scalar(const std::string& name, double value);
  void put_string(const std::string& name, const std::string& value);

  std::string str() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::string body_;
};

class CheckpointReader {
 public:
  static CheckpointReader parse(const std::string& text);
  static CheckpointReader load(const std::filesystem::path& path);

  bool has(const std::string& name) const;
  const Mlp& mlp(const std::string& name) const;
  const Vector& vector(const std::string& name) const;
  double scalar(const std::string& name) const;
  const std::string& text(const std::string& name) const;

 private:
  std::map<std::string, Mlp> mlps_;
  std::map<std::string, Vector> vectors_;
  std::map<std::string, double> scalars_;
  std::map<std::string, std::string> strings_;
};

void save_mlp(const std::filesystem::path& path, const Mlp& net);
Mlp load_mlp(const std::filesystem::path& path);

std::string format_hex(double v);
double parse_double(const std::string& token);

// Stable 64-bit FNV-1a digest, rendered as 16 hex digits.
std::string content_hash(const std::string& data);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& data);

}  // namespace pgs
