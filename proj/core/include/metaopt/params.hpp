#pragma once

#include <memory>
#include <string>
#include <vector>

#include "metaopt/tensor.hpp"

namespace metaopt {

// Flat parameter storage with a named layout. The layout is immutable and
// shared between the many vectors produced during meta-training.
class ParamLayout {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    int64_t offset;
    int64_t numel() const { return shape_numel(shape); }
  };

  explicit ParamLayout(std::vector<Entry> entries);

  const std::vector<Entry>& entries() const { return entries_; }
  int64_t total() const { return total_; }
  const Entry& find(const std::string& name) const;
  bool has(const std::string& name) const;

 private:
  std::vector<Entry> entries_;
  int64_t total_;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

struct ParamVector {
  std::vector<double> values;
  LayoutPtr layout;

  int64_t size() const { return static_cast<int64_t>(values.size()); }
  Tensor as_tensor() const { return Tensor({size()}, values); }
  bool all_finite() const;

  // Views the entry as a tensor copy / writes one back.
  Tensor block(const std::string& name) const;
  void set_block(const std::string& name, const Tensor& t);
};

ParamVector make_params(LayoutPtr layout);
ParamVector params_from_tensor(const Tensor& flat, LayoutPtr layout);

void check_same_layout(const ParamVector& a, const ParamVector& b, const char* ctx);

// Elementwise helpers used by the meta-update rules.
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);  // a*x + y
ParamVector sub(const ParamVector& a, const ParamVector& b);
ParamVector mean(const std::vector<ParamVector>& vs);
double max_abs_diff(const ParamVector& a, const ParamVector& b);

}  // namespace metaopt
