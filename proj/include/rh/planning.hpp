#pragma once

// Optimistic planning of deterministic systems over a finite action set,
// generalised to several candidate models: each node accumulates one
// discounted return per model and the upper bound of a leaf is the worst
// model's return plus the γ^h / (1 - γ) tail.

#include "rh/core.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace rh::planning {

template <class State>
struct Transition {
  State next;
  double reward = 0.0;
  bool terminal = false;  // no reward follows: the tail bound is dropped
};

/// A deterministic generative model: one step from a state under an action
/// index, returning the next state and a reward in [0, 1].
template <class M>
concept PlanningModel = requires(const M& m, const typename M::State& s, std::size_t a) {
  typename M::State;
  { m.step(s, a) } -> std::convertible_to<Transition<typename M::State>>;
};

/// How values of inner nodes combine the models. `robust` takes the minimum
/// over models at the leaves only; `naive` takes it again at every inner node
/// over the per-model maxima, which does not recover the max-min policy.
enum class BackupRule { robust, naive };

struct PlannerConfig {
  double gamma = 0.9;
  std::size_t budget = 100;
  std::size_t action_count = 0;
  BackupRule rule = BackupRule::robust;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("PlannerConfig: γ must lie in (0, 1)");
    if (budget < 1) throw ConfigError("PlannerConfig: budget must be at least 1");
    if (action_count < 1) throw ConfigError("PlannerConfig: the action set must be non-empty");
  }
};

struct PlanResult {
  std::size_t recommended_action = 0;
  double root_b_value = 0.0;
  double root_u_value = 0.0;
  std::size_t tree_depth = 0;
  std::size_t expansions_used = 0;
};

struct BudgetExhausted : CapacityError {
  using CapacityError::CapacityError;
};

struct SimulationError : std::runtime_error {
  SimulationError(const std::string& what, std::vector<std::size_t> node_path)
      : std::runtime_error(what), path(std::move(node_path)) {}
  std::vector<std::size_t> path;
};

template <class State>
struct PlanNode {
  std::vector<std::size_t> path;
  std::vector<State> per_model_state;
  std::vector<double> per_model_return;  // Σ_{n<h} γⁿ R_n^m
  std::vector<char> per_model_terminal;
  std::vector<std::unique_ptr<PlanNode>> children;  // indexed by action
  PlanNode* parent = nullptr;
  bool expanded = false;

  // Cached backups, refreshed bottom-up after every expansion.
  double b = 0.0;
  double u = 0.0;
  std::vector<double> b_per_model;
  std::vector<double> u_per_model;

  std::size_t depth() const { return path.size(); }
  bool terminal(std::size_t m) const { return !per_model_terminal.empty() && per_model_terminal[m]; }
  std::size_t model_count() const { return per_model_return.size(); }
};

inline double tail_bound(double gamma, std::size_t depth) {
  return std::pow(gamma, static_cast<double>(depth)) / (1.0 - gamma);
}

inline double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

template <class State>
double leaf_b_value(const PlanNode<State>& node, double gamma) {
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < node.model_count(); ++m)
    worst = std::min(worst, node.per_model_return[m] + (node.terminal(m) ? 0.0 : tail_bound(gamma, node.depth())));
  return worst;
}

/// Robust B-value computed from the subtree (no caching).
template <class State>
double b_value(const PlanNode<State>& node, double gamma) {
  if (!node.expanded) return leaf_b_value(node, gamma);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& child : node.children) best = std::max(best, b_value(*child, gamma));
  return best;
}

/// Robust U-value computed from the subtree (no caching).
template <class State>
double u_value(const PlanNode<State>& node, double gamma) {
  if (!node.expanded) return min_of(node.per_model_return);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& child : node.children) best = std::max(best, u_value(*child, gamma));
  return best;
}

/// min over models of the discounted partial return along `actions`, truncated at `horizon`.
template <PlanningModel Model>
double surrogate_value(std::span<const std::size_t> actions, std::span<const Model> models,
                       std::span<const typename Model::State> roots, double gamma, std::size_t horizon) {
  if (horizon < 1) throw ConfigError("surrogate_value: horizon must be at least 1");
  if (actions.size() < horizon) throw ConfigError("surrogate_value: sequence shorter than the horizon");
  require(models.size() == roots.size() && !models.empty(), "surrogate_value: one root state per model");
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < models.size(); ++m) {
    auto state = roots[m];
    double total = 0.0;
    double discount = 1.0;
    for (std::size_t n = 0; n < horizon; ++n) {
      auto tr = models[m].step(state, actions[n]);
      total += discount * tr.reward;
      discount *= gamma;
      state = std::move(tr.next);
    }
    worst = std::min(worst, total);
  }
  return worst;
}

template <PlanningModel Model>
class OptimisticPlanner {
 public:
  using State = typename Model::State;
  using Node = PlanNode<State>;

  // The planner only views the models; a temporary vector would dangle.
  OptimisticPlanner(std::vector<Model>&&, std::vector<State>, PlannerConfig) = delete;

  OptimisticPlanner(std::span<const Model> models, std::vector<State> roots, PlannerConfig cfg)
      : models_(models), cfg_(cfg) {
    cfg_.validate();
    require(!models_.empty(), "OptimisticPlanner: at least one model is required");
    require(roots.size() == models_.size(), "OptimisticPlanner: one root state per model");
    root_ = std::make_unique<Node>();
    root_->per_model_state = std::move(roots);
    root_->per_model_return.assign(models_.size(), 0.0);
    root_->per_model_terminal.assign(models_.size(), 0);
    refresh_leaf(*root_);
    node_count_ = 1;
  }

  const Node& root() const { return *root_; }
  const PlannerConfig& config() const { return cfg_; }
  std::size_t expansions() const { return expansions_; }
  std::size_t node_count() const { return node_count_; }

  /// Follows max-B children from the root (lowest action index on ties).
  Node& select_leaf() {
    if (expansions_ >= cfg_.budget) throw BudgetExhausted("OptimisticPlanner: expansion budget exhausted");
    Node* node = root_.get();
    while (node->expanded) {
      std::size_t best = 0;
      for (std::size_t a = 1; a < node->children.size(); ++a)
        if (node->children[a]->b > node->children[best]->b) best = a;
      node = node->children[best].get();
    }
    return *node;
  }

  void expand(Node& leaf) {
    if (leaf.expanded) throw ContractViolation("OptimisticPlanner: node is already expanded");
    if (expansions_ >= cfg_.budget) throw BudgetExhausted("OptimisticPlanner: expansion budget exhausted");
    const double discount = std::pow(cfg_.gamma, static_cast<double>(leaf.depth()));
    leaf.children.reserve(cfg_.action_count);
    for (std::size_t a = 0; a < cfg_.action_count; ++a) {
      auto child = std::make_unique<Node>();
      child->parent = &leaf;
      child->path = leaf.path;
      child->path.push_back(a);
      child->per_model_state.reserve(models_.size());
      child->per_model_return.reserve(models_.size());
      child->per_model_terminal.reserve(models_.size());
      for (std::size_t m = 0; m < models_.size(); ++m) {
        Transition<State> tr;
        try {
          tr = models_[m].step(leaf.per_model_state[m], a);
        } catch (const std::exception& e) {
          throw SimulationError(std::string("simulation failed at path ") + format_path(child->path) + ": " + e.what(),
                                child->path);
        }
        if (!(tr.reward >= 0.0 && tr.reward <= 1.0))
          throw ContractViolation("reward " + std::to_string(tr.reward) + " outside [0, 1] at path " +
                                  format_path(child->path));
        child->per_model_state.push_back(std::move(tr.next));
        child->per_model_return.push_back(leaf.per_model_return[m] + discount * tr.reward);
        child->per_model_terminal.push_back(leaf.per_model_terminal[m] || tr.terminal);
      }
      refresh_leaf(*child);
      leaf.children.push_back(std::move(child));
    }
    leaf.expanded = true;
    ++expansions_;
    node_count_ += cfg_.action_count;
    max_expanded_depth_ = std::max(max_expanded_depth_, leaf.depth());
    for (Node* n = &leaf; n != nullptr; n = n->parent) refresh_inner(*n);
  }

  /// Runs the remaining budget of select-and-expand iterations.
  PlanResult run() {
    while (expansions_ < cfg_.budget) expand(select_leaf());
    return recommend();
  }

  /// First action of a deepest expanded branch; ties by higher U, then lower index.
  PlanResult recommend() const {
    PlanResult out;
    out.root_b_value = root_->b;
    out.root_u_value = root_->u;
    out.expansions_used = expansions_;
    out.tree_depth = expansions_ == 0 ? 0 : max_expanded_depth_ + 1;
    if (!root_->expanded) return out;

    std::vector<bool> candidate(cfg_.action_count, max_expanded_depth_ == 0);
    if (max_expanded_depth_ > 0) mark_deepest(*root_, candidate);
    bool found = false;
    for (std::size_t a = 0; a < cfg_.action_count; ++a) {
      if (!candidate[a]) continue;
      if (!found || root_->children[a]->u > root_->children[out.recommended_action]->u) {
        out.recommended_action = a;
        found = true;
      }
    }
    return out;
  }

 private:
  void refresh_leaf(Node& n) const {
    const double tail = tail_bound(cfg_.gamma, n.depth());
    n.u_per_model = n.per_model_return;
    n.b_per_model = n.per_model_return;
    for (std::size_t m = 0; m < n.model_count(); ++m)
      if (!n.terminal(m)) n.b_per_model[m] += tail;
    n.u = min_of(n.per_model_return);
    n.b = min_of(n.b_per_model);
  }

  void refresh_inner(Node& n) const {
    const std::size_t models = n.model_count();
    n.b = n.u = -std::numeric_limits<double>::infinity();
    n.b_per_model.assign(models, -std::numeric_limits<double>::infinity());
    n.u_per_model.assign(models, -std::numeric_limits<double>::infinity());
    for (const auto& c : n.children) {
      n.b = std::max(n.b, c->b);
      n.u = std::max(n.u, c->u);
      for (std::size_t m = 0; m < models; ++m) {
        n.b_per_model[m] = std::max(n.b_per_model[m], c->b_per_model[m]);
        n.u_per_model[m] = std::max(n.u_per_model[m], c->u_per_model[m]);
      }
    }
    if (cfg_.rule == BackupRule::naive) {
      n.b = min_of(n.b_per_model);
      n.u = min_of(n.u_per_model);
    }
  }

  void mark_deepest(const Node& n, std::vector<bool>& candidate) const {
    if (!n.expanded) return;
    if (n.depth() == max_expanded_depth_) {
      candidate[n.path.front()] = true;
      return;
    }
    for (const auto& c : n.children) mark_deepest(*c, candidate);
  }

  static std::string format_path(const std::vector<std::size_t>& path) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < path.size(); ++i) os << (i ? "," : "") << path[i];
    os << ']';
    return os.str();
  }

  std::span<const Model> models_;
  PlannerConfig cfg_;
  std::unique_ptr<Node> root_;
  std::size_t expansions_ = 0;
  std::size_t node_count_ = 0;
  std::size_t max_expanded_depth_ = 0;
};

/// Convenience wrapper: build a tree, spend the budget, recommend.
template <PlanningModel Model>
PlanResult plan(std::span<const Model> models, std::vector<typename Model::State> roots, const PlannerConfig& cfg) {
  OptimisticPlanner<Model> planner(models, std::move(roots), cfg);
  return planner.run();
}

}  // namespace rh::planning
