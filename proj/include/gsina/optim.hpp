#ifndef GSINA_OPTIM_HPP
#define GSINA_OPTIM_HPP

#include "gsina/tape.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

namespace gsina {

using TensorMap = std::map<std::string, Matrix>;

struct AdamConfig;

/// Named parameters plus Adam moment buffers. Iteration order is by name.
class ParamStore {
 public:
  void add(const std::string& name, Matrix init);
  bool contains(const std::string& name) const { return values_.count(name) > 0; }
  const Matrix& at(const std::string& name) const;
  Matrix& at(const std::string& name);

  const TensorMap& values() const { return values_; }
  std::int64_t step() const { return step_; }
  Index num_scalars() const;

  /// Replaces parameter values (shapes must match); moments are left untouched.
  void assign(const TensorMap& values);

 private:
  friend void adam_step(ParamStore&, const TensorMap&, const AdamConfig&);
  TensorMap values_;
  TensorMap first_moment_;
  TensorMap second_moment_;
  std::int64_t step_ = 0;
};

/// Parameters bound as leaves of one tape.
struct Binding {
  std::map<std::string, Var> vars;
  const Var& operator[](const std::string& name) const;
};

Binding bind(const ParamStore& params, Tape& tape);

/// Gradients for every bound parameter (zeros where the loss does not depend on it).
TensorMap collect_gradients(const Binding& binding, const Gradients& grads);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Throws MissingGradient if any parameter lacks a gradient.
void adam_step(ParamStore& params, const TensorMap& grads, const AdamConfig& config);

// Checkpoint layout (all integers little-endian):
//   "GSINACKP" | u32 version=1 | u32 count |
//   count x { u32 name_len | name bytes | u32 rank=2 | u64 rows | u64 cols | rows*cols f64 row-major }
void write_checkpoint(std::ostream& out, const TensorMap& tensors);
void write_checkpoint(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap read_checkpoint(std::istream& in);
TensorMap read_checkpoint(const std::filesystem::path& path);

}  // namespace gsina

#endif  // GSINA_OPTIM_HPP
