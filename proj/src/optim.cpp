#include "gsina/optim.hpp"

#include "gsina/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace gsina {

void ParamStore::add(const std::string& name, Matrix init) {
  if (values_.count(name)) throw Error(ErrorCode::InvalidConfig, "duplicate parameter " + name);
  first_moment_[name] = Matrix::Zero(init.rows(), init.cols());
  second_moment_[name] = Matrix::Zero(init.rows(), init.cols());
  values_[name] = std::move(init);
}

const Matrix& ParamStore::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw Error(ErrorCode::MissingGradient, "unknown parameter " + name);
  return it->second;
}

Matrix& ParamStore::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw Error(ErrorCode::MissingGradient, "unknown parameter " + name);
  return it->second;
}

Index ParamStore::num_scalars() const {
  Index n = 0;
  for (const auto& [_, v] : values_) n += v.size();
  return n;
}

void ParamStore::assign(const TensorMap& values) {
  for (const auto& [name, v] : values) {
    Matrix& dst = at(name);
    if (dst.rows() != v.rows() || dst.cols() != v.cols()) throw Error(ErrorCode::ShapeMismatch, "assign " + name);
    dst = v;
  }
}

const Var& Binding::operator[](const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw Error(ErrorCode::MissingGradient, "unbound parameter " + name);
  return it->second;
}

Binding bind(const ParamStore& params, Tape& tape) {
  Binding b;
  for (const auto& [name, v] : params.values()) b.vars.emplace(name, tape.leaf(v));
  return b;
}

TensorMap collect_gradients(const Binding& binding, const Gradients& grads) {
  TensorMap out;
  for (const auto& [name, v] : binding.vars) out.emplace(name, grads[v]);
  return out;
}

void adam_step(ParamStore& params, const TensorMap& grads, const AdamConfig& c) {
  for (const auto& [name, _] : params.values_) {
    if (!grads.count(name)) throw Error(ErrorCode::MissingGradient, name);
  }
  ++params.step_;
  const double t = static_cast<double>(params.step_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (auto& [name, p] : params.values_) {
    const Matrix& g = grads.at(name);
    if (g.rows() != p.rows() || g.cols() != p.cols()) throw Error(ErrorCode::ShapeMismatch, "gradient of " + name);
    Matrix& m = params.first_moment_[name];
    Matrix& v = params.second_moment_[name];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
  }
}

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'S', 'I', 'N', 'A', 'C', 'K', 'P'};

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!in) throw Error(ErrorCode::Parse, "truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const TensorMap& tensors) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, 2);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) put_le<double>(out, m(i, j));
  }
}

void write_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  write_checkpoint(out, tensors);
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

TensorMap read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(ErrorCode::Parse, "not a checkpoint (bad magic)");
  const auto version = get_le<std::uint32_t>(in);
  if (version != 1) throw Error(ErrorCode::Parse, "unsupported checkpoint version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(in);
  TensorMap out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = get_le<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw Error(ErrorCode::Parse, "truncated checkpoint");
    if (get_le<std::uint32_t>(in) != 2) throw Error(ErrorCode::Parse, "only rank-2 tensors are supported");
    const auto rows = static_cast<Index>(get_le<std::uint64_t>(in));
    const auto cols = static_cast<Index>(get_le<std::uint64_t>(in));
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = get_le<double>(in);
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

TensorMap read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace gsina
