#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "univid/autograd.hpp"

namespace univid {

// Which part of the network a parameter belongs to. Drives staged training.
enum class ParamGroup { kSpatial, kTemporal, kConditioning };

std::string_view group_name(ParamGroup g);
ParamGroup parse_group(std::string_view name);

struct Parameter {
  std::string name;
  ParamGroup group;
  ag::Var var;
};

// Named model parameters. Names are unique hierarchical dotted paths; every
// parameter carries exactly one group, so the groups partition the store.
class ParameterStore {
 public:
  // Registers a leaf and returns a handle sharing its storage.
  ag::Var add(std::string name, ParamGroup group, Tensor init);

  const std::vector<Parameter>& params() const noexcept { return params_; }
  size_t size() const noexcept { return params_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Parameter& get(const std::string& name) const;
  Parameter& get(const std::string& name);

  int64_t count(ParamGroup g) const;
  int64_t total_count() const;

  void zero_grad();
  // Sets requires_grad on exactly the named parameters.
  void set_trainable(const std::vector<std::string>& names);

  // Copies values from `other`; names, groups and shapes must match exactly.
  void assign(const ParameterStore& other);
  // Bitwise snapshot of all values, keyed by name.
  std::map<std::string, Tensor> snapshot() const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, size_t> index_;
};

}  // namespace univid
