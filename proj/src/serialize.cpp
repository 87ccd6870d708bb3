#include "panelreg/serialize.hpp"

#include <fstream>

#include <fmt/format.h>

#include "panelreg/error.hpp"

namespace panelreg {

namespace {

using json = nlohmann::json;

json tree_to_json(const Tree& tree, std::int32_t index = 0) {
  const TreeNode& node = tree.nodes()[static_cast<std::size_t>(index)];
  if (node.is_leaf()) return {{"value", node.value}, {"n", node.n_samples}};
  return {{"feature", node.feature},
          {"threshold", node.threshold},
          {"value", node.value},
          {"n", node.n_samples},
          {"left", tree_to_json(tree, node.left)},
          {"right", tree_to_json(tree, node.right)}};
}

std::int32_t append_node(const json& j, std::vector<TreeNode>& nodes, std::size_t n_features) {
  auto index = static_cast<std::int32_t>(nodes.size());
  nodes.push_back(TreeNode{-1, 0.0, -1, -1, j.at("value").get<double>(), j.at("n").get<std::size_t>()});
  if (j.contains("feature")) {
    int feature = j.at("feature").get<int>();
    if (feature < 0 || static_cast<std::size_t>(feature) >= n_features) {
      throw InputError(fmt::format("tree node references feature {} of {}", feature, n_features));
    }
    double threshold = j.at("threshold").get<double>();
    std::int32_t left = append_node(j.at("left"), nodes, n_features);
    std::int32_t right = append_node(j.at("right"), nodes, n_features);
    TreeNode& node = nodes[static_cast<std::size_t>(index)];
    node.feature = feature;
    node.threshold = threshold;
    node.left = left;
    node.right = right;
  }
  return index;
}

Tree tree_from_json(const json& j, std::size_t n_features) {
  std::vector<TreeNode> nodes;
  append_node(j, nodes, n_features);
  return Tree(std::move(nodes));
}

json trees_to_json(const std::vector<Tree>& trees) {
  json out = json::array();
  for (const auto& t : trees) out.push_back(tree_to_json(t));
  return out;
}

std::vector<Tree> trees_from_json(const json& j, std::size_t n_features) {
  std::vector<Tree> out;
  for (const auto& t : j) out.push_back(tree_from_json(t, n_features));
  return out;
}

std::string_view penalty_name(Penalty p) {
  switch (p) {
    case Penalty::kNone: return "none";
    case Penalty::kRidge: return "ridge";
    case Penalty::kLasso: return "lasso";
  }
  return "none";
}

Penalty parse_penalty(const std::string& s) {
  if (s == "none") return Penalty::kNone;
  if (s == "ridge") return Penalty::kRidge;
  if (s == "lasso") return Penalty::kLasso;
  throw InputError(fmt::format("unknown penalty '{}'", s));
}

}  // namespace

json model_to_json(const FittedModel& m) {
  json j = {{"format", "panelreg-model"},
            {"version", kModelFormatVersion},
            {"kind", std::string(to_string(m.kind()))},
            {"feature_names", m.feature_names()}};
  const auto& names = m.feature_names();
  if (auto* null = m.as<NullModel>()) {
    j["mean"] = null->mean;
  } else if (auto* lin = m.as<LinearModel>()) {
    json coefs = json::object();
    for (std::size_t k = 0; k < names.size(); ++k) coefs[names[k]] = lin->coefficients[k];
    j["intercept"] = lin->intercept;
    j["coefficients"] = std::move(coefs);
    j["penalty"] = std::string(penalty_name(lin->penalty));
    j["lambda"] = lin->lambda;
    j["standardization"] = {{"means", lin->feature_means}, {"sds", lin->feature_sds}};
  } else if (auto* tree = m.as<TreeModel>()) {
    j["params"] = {{"n_min", tree->params.n_min}, {"m_try", tree->params.m_try}, {"max_depth", tree->params.max_depth}};
    j["seed"] = tree->seed;
    j["tree"] = tree_to_json(tree->tree);
  } else if (auto* forest = m.as<ForestModel>()) {
    j["m_try"] = forest->m_try;
    j["n_min"] = forest->n_min;
    j["bootstrap"] = forest->bootstrap;
    j["tree_seeds"] = forest->tree_seeds;
    j["oob_error"] = std::isnan(forest->oob_error) ? json(nullptr) : json(forest->oob_error);
    j["trees"] = trees_to_json(forest->trees);
  } else if (auto* gbm = m.as<BoostedModel>()) {
    j["initial"] = gbm->initial;
    j["shrinkage"] = gbm->shrinkage;
    j["max_depth"] = gbm->max_depth;
    j["n_min"] = gbm->n_min;
    j["stages"] = trees_to_json(gbm->stages);
  }
  return j;
}

FittedModel model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "panelreg-model") throw InputError("not a panelreg model document");
    int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) throw InputError(fmt::format("unsupported model format version {}", version));
    auto names = j.at("feature_names").get<std::vector<std::string>>();
    const std::size_t m = names.size();
    ModelKind kind = parse_model_kind(j.at("kind").get<std::string>());
    switch (kind) {
      case ModelKind::kNull:
        return FittedModel(std::move(names), NullModel{j.at("mean").get<double>()});
      case ModelKind::kOls:
      case ModelKind::kRidge:
      case ModelKind::kLasso: {
        LinearModel lin;
        lin.intercept = j.at("intercept").get<double>();
        const auto& coefs = j.at("coefficients");
        for (const auto& name : names) lin.coefficients.push_back(coefs.at(name).get<double>());
        lin.penalty = parse_penalty(j.at("penalty").get<std::string>());
        lin.lambda = j.at("lambda").get<double>();
        lin.feature_means = j.at("standardization").at("means").get<std::vector<double>>();
        lin.feature_sds = j.at("standardization").at("sds").get<std::vector<double>>();
        return FittedModel(std::move(names), std::move(lin));
      }
      case ModelKind::kTree: {
        TreeModel tree;
        tree.params.n_min = j.at("params").at("n_min").get<std::size_t>();
        tree.params.m_try = j.at("params").at("m_try").get<std::size_t>();
        tree.params.max_depth = j.at("params").at("max_depth").get<std::size_t>();
        tree.seed = j.at("seed").get<std::uint64_t>();
        tree.tree = tree_from_json(j.at("tree"), m);
        return FittedModel(std::move(names), std::move(tree));
      }
      case ModelKind::kForest: {
        ForestModel forest;
        forest.m_try = j.at("m_try").get<std::size_t>();
        forest.n_min = j.at("n_min").get<std::size_t>();
        forest.bootstrap = j.at("bootstrap").get<bool>();
        forest.tree_seeds = j.at("tree_seeds").get<std::vector<std::uint64_t>>();
        forest.oob_error = j.at("oob_error").is_null() ? std::nan("") : j.at("oob_error").get<double>();
        forest.trees = trees_from_json(j.at("trees"), m);
        if (forest.trees.empty()) throw InputError("forest document has no trees");
        return FittedModel(std::move(names), std::move(forest));
      }
      case ModelKind::kGbm: {
        BoostedModel gbm;
        gbm.initial = j.at("initial").get<double>();
        gbm.shrinkage = j.at("shrinkage").get<double>();
        gbm.max_depth = j.at("max_depth").get<std::size_t>();
        gbm.n_min = j.at("n_min").get<std::size_t>();
        gbm.stages = trees_from_json(j.at("stages"), m);
        return FittedModel(std::move(names), std::move(gbm));
      }
    }
  } catch (const json::exception& e) {
    throw InputError(fmt::format("malformed model document: {}", e.what()));
  }
  throw InputError("malformed model document");
}

void save_model(const FittedModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
  out << model_to_json(m).dump() << '\n';
}

FittedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open model file {}", path.string()));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return model_from_json(j);
}

}  // namespace panelreg
