// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/numerics/params.hpp"

#include <sstream>
#include <stdexcept>

#include "memaudit/errors.hpp"

namespace memaudit::numerics {

void ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  entries_.push_back({std::move(name), std::move(value)});
}

std::size_t ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

Tensor& ParamSet::operator[](std::string_view name) {
  return entries_[index_of(name)].value;
}

const Tensor& ParamSet::operator[](std::string_view name) const {
  return entries_[index_of(name)].value;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& e : entries_) {
    if (!e.value.all_finite()) return false;
  }
  return true;
}

std::string ParamSet::shape_report() const {
  std::ostringstream os;
  for (const auto& e : entries_) {
    os << e.name << ' ' << shape_to_string(e.value.shape()) << '\n';
  }
  os << "total " << scalar_count() << '\n';
  return os.str();
}

void ParamSet::round_to_float() {
  for (auto& e : entries_) {
    for (double& v : e.value.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params, bool trainable)
    : params_(&params) {
  vars_.reserve(params.size());
  for (const auto& e : params.entries()) {
    vars_.push_back(trainable ? tape.variable(e.value) : tape.constant(e.value));
  }
}

Var BoundParams::operator[](std::string_view name) const {
  return vars_[params_->index_of(name)];
}

std::vector<Tensor> BoundParams::gradients() const {
  std::vector<Tensor> grads;
  grads.reserve(vars_.size());
  for (const auto& v : vars_) grads.push_back(v.tape().grad(v));
  return grads;
}

}  // namespace memaudit::numerics
