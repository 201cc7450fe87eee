#include "metaopt/params.hpp"

#include <algorithm>
#include <cmath>

namespace metaopt {

ParamLayout::ParamLayout(std::vector<Entry> entries) : entries_(std::move(entries)) {
  int64_t expect = 0;
  for (const Entry& e : entries_) {
    require(e.offset == expect, "layout: entry '" + e.name + "' at offset " +
                                    std::to_string(e.offset) + ", expected " +
                                    std::to_string(expect) + " (entries must be contiguous)");
    expect += e.numel();
  }
  total_ = expect;
}

const ParamLayout::Entry& ParamLayout::find(const std::string& name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return e;
  fail("layout: no entry named '" + name + "'");
}

bool ParamLayout::has(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

bool ParamVector::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Tensor ParamVector::block(const std::string& name) const {
  const auto& e = layout->find(name);
  std::vector<double> data(values.begin() + e.offset, values.begin() + e.offset + e.numel());
  return Tensor(e.shape, std::move(data));
}

void ParamVector::set_block(const std::string& name, const Tensor& t) {
  const auto& e = layout->find(name);
  require(t.shape() == e.shape, "params: block '" + name + "' has shape " + shape_str(e.shape) +
                                    ", got " + shape_str(t.shape()));
  std::copy(t.values().begin(), t.values().end(), values.begin() + e.offset);
}

ParamVector make_params(LayoutPtr layout) {
  ParamVector p;
  p.values.assign(static_cast<size_t>(layout->total()), 0.0);
  p.layout = std::move(layout);
  return p;
}

ParamVector params_from_tensor(const Tensor& flat, LayoutPtr layout) {
  require(flat.rank() == 1 && flat.numel() == layout->total(),
          "params: flat tensor " + shape_str(flat.shape()) + " does not match layout length " +
              std::to_string(layout->total()));
  ParamVector p;
  p.values = flat.values();
  p.layout = std::move(layout);
  return p;
}

void check_same_layout(const ParamVector& a, const ParamVector& b, const char* ctx) {
  require(a.layout && b.layout, std::string(ctx) + ": parameter vector without layout");
  require(a.values.size() == b.values.size(),
          std::string(ctx) + ": layout mismatch, " + std::to_string(a.values.size()) + " vs " +
              std::to_string(b.values.size()) + " parameters");
}

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  check_same_layout(x, y, "axpy");
  ParamVector r = y;
  for (size_t i = 0; i < r.values.size(); ++i) r.values[i] += a * x.values[i];
  return r;
}

ParamVector sub(const ParamVector& a, const ParamVector& b) {
  check_same_layout(a, b, "sub");
  ParamVector r = a;
  for (size_t i = 0; i < r.values.size(); ++i) r.values[i] -= b.values[i];
  return r;
}

ParamVector mean(const std::vector<ParamVector>& vs) {
  require(!vs.empty(), "mean: empty parameter list");
  ParamVector r = vs[0];
  for (size_t k = 1; k < vs.size(); ++k) {
    check_same_layout(vs[0], vs[k], "mean");
    for (size_t i = 0; i < r.values.size(); ++i) r.values[i] += vs[k].values[i];
  }
  const double inv = 1.0 / static_cast<double>(vs.size());
  for (double& v : r.values) v *= inv;
  return r;
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  check_same_layout(a, b, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i)
    m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

}  // namespace metaopt
