#include "univid/params.hpp"

#include <set>

#include "univid/error.hpp"

namespace univid {

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kSpatial:
      return "spatial";
    case ParamGroup::kTemporal:
      return "temporal";
    case ParamGroup::kConditioning:
      return "conditioning";
  }
  return "?";
}

ParamGroup parse_group(std::string_view name) {
  if (name == "spatial") return ParamGroup::kSpatial;
  if (name == "temporal") return ParamGroup::kTemporal;
  if (name == "conditioning") return ParamGroup::kConditioning;
  throw FormatError("unknown parameter group '" + std::string(name) + "'");
}

ag::Var ParameterStore::add(std::string name, ParamGroup group, Tensor init) {
  if (name.empty()) throw Error("parameter name must not be empty");
  if (index_.count(name)) throw Error("duplicate parameter name '" + name + "'");
  ag::Var v(std::move(init), true);
  index_.emplace(name, params_.size());
  params_.push_back({std::move(name), group, v});
  return v;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return params_[it->second];
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
  return params_[it->second];
}

int64_t ParameterStore::count(ParamGroup g) const {
  int64_t n = 0;
  for (const auto& p : params_)
    if (p.group == g) n += p.var.numel();
  return n;
}

int64_t ParameterStore::total_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.var.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void ParameterStore::set_trainable(const std::vector<std::string>& names) {
  std::set<std::string> on(names.begin(), names.end());
  for (auto& p : params_) p.var.set_requires_grad(on.count(p.name) != 0);
}

void ParameterStore::assign(const ParameterStore& other) {
  if (other.size() != size()) {
    throw ShapeError("parameter count mismatch: expected " + std::to_string(size()) + ", got " +
                     std::to_string(other.size()));
  }
  for (auto& p : params_) {
    if (!other.contains(p.name)) throw ShapeError("missing parameter '" + p.name + "'");
    const Parameter& src = other.get(p.name);
    if (src.group != p.group) throw ShapeError("group mismatch for parameter '" + p.name + "'");
    if (src.var.shape() != p.var.shape()) {
      throw ShapeError("shape mismatch for parameter '" + p.name + "': expected " + shape_str(p.var.shape()) +
                       ", got " + shape_str(src.var.shape()));
    }
    p.var.mutable_value() = src.var.value();
  }
}

std::map<std::string, Tensor> ParameterStore::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : params_) out.emplace(p.name, p.var.value());
  return out;
}

}  // namespace univid
