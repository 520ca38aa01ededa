#include "spdectl/regfeat.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace spdectl {

std::string to_string(ForcingMode mode) { return mode == ForcingMode::combined ? "combined" : "split"; }

ForcingMode forcing_mode_from_string(const std::string& name) {
  if (name == "combined") return ForcingMode::combined;
  if (name == "split") return ForcingMode::split;
  throw std::invalid_argument("unknown forcing mode '" + name + "'");
}

void FeatureSpec::validate() const {
  if (n < 0 || m < 0 || l < 0) throw std::invalid_argument("feature heights must be non-negative");
  if (max_features == 0) throw std::invalid_argument("max_features must be positive");
}

namespace {

const char* leaf_key(Leaf leaf) {
  switch (leaf) {
    case Leaf::combined:
      return "F";
    case Leaf::force:
      return "f";
    case Leaf::noise:
      return "xi";
    case Leaf::none:
      break;
  }
  return "";
}

std::string factor_key(const std::vector<FeatureTerm>& terms, const FeatureFactor& f, int dim) {
  const std::string& inner = terms[f.feature].key;
  if (f.axis < 0) return inner;
  if (dim == 1) return "D(" + inner + ")";
  return (f.axis == 0 ? "Dx(" : "Dy(") + inner + ")";
}

struct LeafBudget {
  Leaf leaf;
  int min_k, max_k;
};

std::vector<LeafBudget> leaf_budgets(const FeatureSpec& spec) {
  std::vector<LeafBudget> out{{Leaf::none, 1, spec.m}};
  if (spec.forcing == ForcingMode::combined) {
    if (spec.l >= 1) out.push_back({Leaf::combined, 0, spec.l - 1});
  } else {
    if (spec.m >= 1) out.push_back({Leaf::force, 0, spec.m - 1});
    if (spec.l >= 1) out.push_back({Leaf::noise, 0, spec.l - 1});
  }
  return out;
}

}  // namespace

std::vector<FeatureTerm> enumerate_terms(const FeatureSpec& spec, int dim) {
  spec.validate();
  if (dim != 1 && dim != 2) throw std::invalid_argument("enumerate_terms: dim must be 1 or 2");
  std::vector<FeatureTerm> terms;
  FeatureTerm s;
  s.initial = true;
  s.key = "s";
  terms.push_back(s);
  std::set<std::string> seen{"s"};

  for (int round = 1; round <= spec.n; ++round) {
    // factor choices drawn from the previous round's set
    std::vector<FeatureFactor> choices;
    const std::size_t prev = terms.size();
    for (std::size_t i = 0; i < prev; ++i) {
      choices.push_back({i, -1});
      if (spec.derivatives) {
        for (int a = 0; a < dim; ++a) choices.push_back({i, a});
      }
    }
    std::vector<FeatureTerm> fresh;
    for (const auto& budget : leaf_budgets(spec)) {
      for (int k = std::max(budget.min_k, 0); k <= budget.max_k; ++k) {
        // multisets of size k over `choices` as nondecreasing index tuples
        std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
        while (true) {
          FeatureTerm t;
          t.leaf = budget.leaf;
          t.round = round;
          std::vector<std::string> keys;
          for (std::size_t c : idx) {
            t.factors.push_back(choices[c]);
            keys.push_back(factor_key(terms, choices[c], dim));
          }
          std::vector<std::size_t> order(keys.size());
          for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
          std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
          std::string body;
          std::vector<FeatureFactor> sorted;
          for (std::size_t o : order) {
            if (!body.empty()) body += '*';
            body += keys[o];
            sorted.push_back(t.factors[o]);
          }
          t.factors = std::move(sorted);
          if (budget.leaf != Leaf::none) {
            if (!body.empty()) body += '*';
            body += leaf_key(budget.leaf);
          }
          t.key = "I[" + body + "]";
          if (seen.insert(t.key).second) {
            fresh.push_back(std::move(t));
            if (prev + fresh.size() > spec.max_features) {
              throw std::length_error("feature set exceeds max_features (" + std::to_string(spec.max_features) +
                                      ")");
            }
          }
          // advance the nondecreasing tuple
          int pos = k - 1;
          while (pos >= 0 && idx[static_cast<std::size_t>(pos)] + 1 == choices.size()) --pos;
          if (pos < 0) break;
          const std::size_t next = idx[static_cast<std::size_t>(pos)] + 1;
          for (auto p = static_cast<std::size_t>(pos); p < idx.size(); ++p) idx[p] = next;
        }
      }
    }
    std::sort(fresh.begin(), fresh.end(), [](const FeatureTerm& a, const FeatureTerm& b) { return a.key < b.key; });
    for (auto& t : fresh) terms.push_back(std::move(t));
  }
  return terms;
}

Tensor spatial_derivative(const Tensor& x, const Grid& grid, int axis) {
  return apply_field_map(x, std::make_shared<const DerivativeOperator>(grid, axis));
}

// ---------------------------------------------------------------------------

FeatureBlock::FeatureBlock(FeatureSpec spec, Grid grid, const DiscreteOperator& op, double dt)
    : spec_(spec), grid_(grid), dt_(dt), prop_(make_propagator(op, dt)) {
  grid_.validate();
  if (op.field_size() != grid_.field_size()) throw std::invalid_argument("FeatureBlock: operator/grid mismatch");
  for (int a = 0; a < grid_.dim; ++a) deriv_.push_back(std::make_shared<const DerivativeOperator>(grid_, a));
  terms_ = enumerate_terms(spec_, grid_.dim);
}

Tensor FeatureBlock::initial_feature(const Tensor& u0, std::size_t steps) const {
  return propagate(u0, Tensor(), prop_, dt_, steps);
}

std::vector<Tensor> FeatureBlock::fields(const Tensor& u0, const Tensor& forcing, const Tensor& noise,
                                         std::size_t steps) const {
  const std::size_t f = grid_.field_size();
  if (u0.dim() != 2 || u0.size(1) != f) {
    throw std::invalid_argument("FeatureBlock: u0 must be [B, " + std::to_string(f) + "], got " +
                                shape_str(u0.shape()));
  }
  const std::size_t b = u0.size(0);
  const Shape drive_shape{b, steps, f};
  for (const Tensor* t : {&forcing, &noise}) {
    if (t->defined() && t->shape() != drive_shape) {
      throw std::invalid_argument("FeatureBlock: forcing/noise must be " + shape_str(drive_shape) + ", got " +
                                  shape_str(t->shape()));
    }
  }
  if (noise.defined() && spec_.forcing == ForcingMode::combined) {
    throw std::invalid_argument("FeatureBlock: combined mode takes f~ as forcing and no separate noise");
  }

  const Tensor zero_init = Tensor::zeros({b, f});
  std::vector<Tensor> out;
  out.reserve(terms_.size());
  std::vector<Tensor> sliced(terms_.size());
  std::map<std::pair<std::size_t, int>, Tensor> derived;

  auto factor_value = [&](const FeatureFactor& fac) -> Tensor {
    if (!sliced[fac.feature].defined()) sliced[fac.feature] = slice(out[fac.feature], 1, 0, steps);
    if (fac.axis < 0) return sliced[fac.feature];
    auto key = std::make_pair(fac.feature, fac.axis);
    auto it = derived.find(key);
    if (it == derived.end()) {
      it = derived.emplace(key, apply_field_map(sliced[fac.feature], deriv_[static_cast<std::size_t>(fac.axis)]))
               .first;
    }
    return it->second;
  };

  for (const auto& term : terms_) {
    if (term.initial) {
      out.push_back(initial_feature(u0, steps));
      continue;
    }
    Tensor z;
    for (const auto& fac : term.factors) {
      Tensor v = factor_value(fac);
      z = z.defined() ? mul(z, v) : v;
    }
    const Tensor* leaf = nullptr;
    if (term.leaf == Leaf::combined || term.leaf == Leaf::force) leaf = &forcing;
    if (term.leaf == Leaf::noise) leaf = &noise;
    if (leaf != nullptr) {
      if (!leaf->defined()) {
        out.push_back(Tensor::zeros({b, steps + 1, f}));  // zero drive gives a zero integral
        continue;
      }
      z = z.defined() ? mul(z, *leaf) : *leaf;
    }
    out.push_back(propagate(zero_init, z, prop_, dt_, steps));
  }
  return out;
}

Tensor FeatureBlock::evaluate(const Tensor& u0, const Tensor& forcing, const Tensor& noise, std::size_t steps) const {
  auto parts = fields(u0, forcing, noise, steps);
  const std::size_t b = u0.size(0), f = grid_.field_size();
  for (auto& p : parts) p = reshape(p, {b, 1, steps + 1, f});
  return concat(parts, 1);
}

Tensor FeatureBlock::evaluate_final(const Tensor& u0, const Tensor& forcing, const Tensor& noise,
                                    std::size_t steps) const {
  auto parts = fields(u0, forcing, noise, steps);
  const std::size_t b = u0.size(0), f = grid_.field_size();
  for (auto& p : parts) p = reshape(slice(p, 1, steps, 1), {b, 1, f});
  return concat(parts, 1);
}

Tensor sample_frames(const Tensor& features, std::size_t stride) {
  if (features.dim() != 4 || stride == 0) throw std::invalid_argument("sample_frames: expected [B, N, S+1, F]");
  const std::size_t s = features.size(2) - 1;
  if (s % stride != 0) throw std::invalid_argument("sample_frames: stride must divide the step count");
  std::vector<Tensor> parts;
  for (std::size_t t = 0; t <= s; t += stride) parts.push_back(slice(features, 2, t, 1));
  return concat(parts, 2);
}

}  // namespace spdectl
