#include "rsmc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "rsmc/errors.hpp"

namespace rsmc {

namespace {

class Reader {
 public:
  explicit Reader(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const {
    const YAML::Mark m = node.Mark();
    std::ostringstream os;
    os << origin_;
    if (!m.is_null()) os << ':' << (m.line + 1) << ':' << (m.column + 1);
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  void require_map(const YAML::Node& node, const std::string& what) const {
    if (!node.IsMap()) fail(node, what + " must be a mapping");
  }

  void check_keys(const YAML::Node& node, const std::set<std::string>& allowed,
                  const std::string& what) const {
    require_map(node, what);
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "' in " + what);
    }
  }

  template <class T>
  T scalar(const YAML::Node& node, const std::string& key) const {
    if (!node.IsScalar()) fail(node, "'" + key + "' must be a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, "'" + key + "' has an invalid value '" + node.Scalar() + "'");
    }
  }

  template <class T>
  void read(const YAML::Node& map, const std::string& key, T& out) const {
    if (const YAML::Node n = map[key]) out = scalar<T>(n, key);
  }

  template <class E>
  E choice(const YAML::Node& node, const std::string& key,
           const std::vector<std::pair<std::string, E>>& options) const {
    const auto v = scalar<std::string>(node, key);
    for (const auto& [name, e] : options) {
      if (name == v) return e;
    }
    std::string list;
    for (const auto& [name, e] : options) list += (list.empty() ? "" : ", ") + name;
    fail(node, "'" + key + "' must be one of: " + list);
  }

  std::vector<double> doubles(const YAML::Node& node, const std::string& key) const {
    if (!node.IsSequence()) fail(node, "'" + key + "' must be a list");
    std::vector<double> out;
    for (const auto& item : node) out.push_back(scalar<double>(item, key));
    return out;
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
};

const std::vector<std::pair<std::string, ExperimentKind>> kExperiments{
    {"wiener_velocity", ExperimentKind::WienerVelocity},
    {"asymmetric_wiener", ExperimentKind::AsymmetricWiener},
    {"tan", ExperimentKind::TAN},
    {"gp_regression", ExperimentKind::GPRegression}};

ContaminationSpec read_contamination(const Reader& r, const YAML::Node& node) {
  r.check_keys(node, {"type", "probability", "scale", "dof"}, "contamination");
  enum class Kind { None, Gaussian, StudentT, Exponential };
  const Kind kind = node["type"] ? r.choice<Kind>(node["type"], "type",
                                                  {{"none", Kind::None},
                                                   {"gaussian", Kind::Gaussian},
                                                   {"student_t", Kind::StudentT},
                                                   {"exponential", Kind::Exponential}})
                                 : Kind::Gaussian;
  double p = 0.0;
  r.read(node, "probability", p);
  if (node["probability"] && !(p >= 0.0 && p <= 1.0)) {
    r.fail(node["probability"], "'probability' must lie in [0, 1]");
  }
  switch (kind) {
    case Kind::None:
      return NoContamination{};
    case Kind::Gaussian: {
      AdditiveGaussian c{p, 100.0};
      r.read(node, "scale", c.scale);
      return c;
    }
    case Kind::StudentT: {
      AdditiveStudentT c{p, 1.0, 20.0};
      r.read(node, "scale", c.scale);
      r.read(node, "dof", c.dof);
      return c;
    }
    case Kind::Exponential: {
      MultiplicativeExponential c{p, 1000.0};
      r.read(node, "scale", c.scale);
      return c;
    }
  }
  return NoContamination{};
}

void read_simulator(const Reader& r, const YAML::Node& node, SimulatorConfig& s,
                    const std::filesystem::path& base_dir) {
  r.check_keys(node,
               {"dt", "steps", "x0", "obs_variance", "sigma_left", "sigma_right", "lengthscale",
                "signal_variance", "contamination", "data"},
               "simulator");
  r.read(node, "dt", s.dt);
  r.read(node, "steps", s.steps);
  r.read(node, "obs_variance", s.obs_variance);
  r.read(node, "sigma_left", s.sigma_left);
  r.read(node, "sigma_right", s.sigma_right);
  r.read(node, "lengthscale", s.lengthscale);
  r.read(node, "signal_variance", s.signal_variance);
  if (const YAML::Node x0 = node["x0"]) {
    const std::vector<double> v = r.doubles(x0, "x0");
    s.x0 = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (const YAML::Node c = node["contamination"]) s.contamination = read_contamination(r, c);
  if (const YAML::Node d = node["data"]) {
    r.check_keys(d, {"path", "time_column", "value_column", "truth_column"}, "data");
    if (!d["path"]) r.fail(d, "data needs a 'path'");
    DataSource src;
    std::filesystem::path p = r.scalar<std::string>(d["path"], "path");
    src.path = p.is_relative() ? base_dir / p : p;
    r.read(d, "time_column", src.time_column);
    r.read(d, "value_column", src.value_column);
    r.read(d, "truth_column", src.truth_column);
    s.data = src;
  }
}

FilterConfig read_filter(const Reader& r, const YAML::Node& node) {
  r.check_keys(node,
               {"name", "type", "likelihood", "beta", "integral", "t_scale", "t_dof", "particles",
                "resampling", "ess_threshold", "apf_stabiliser", "predictive_draws",
                "predictive_noise", "backend", "smoother_trajectories"},
               "filter");
  FilterConfig f;
  if (node["type"]) {
    f.type = r.choice<FilterType>(node["type"], "type",
                                  {{"kalman", FilterType::Kalman},
                                   {"bpf", FilterType::Bootstrap},
                                   {"apf", FilterType::Auxiliary}});
  }
  f.spec.kind = f.type == FilterType::Auxiliary ? FilterKind::Auxiliary : FilterKind::Bootstrap;
  if (node["likelihood"]) {
    f.likelihood = r.choice<LikelihoodChoice>(node["likelihood"], "likelihood",
                                              {{"gaussian", LikelihoodChoice::Gaussian},
                                               {"student_t", LikelihoodChoice::StudentT},
                                               {"asymmetric", LikelihoodChoice::Asymmetric},
                                               {"oracle", LikelihoodChoice::OracleMixture}});
  }
  if (const YAML::Node b = node["beta"]) {
    const auto beta = r.scalar<double>(b, "beta");
    if (!(beta > 0.0 && beta < 1.0)) r.fail(b, "'beta' must lie in (0, 1)");
    f.beta = beta;
  }
  if (node["integral"]) {
    f.integral_mode = r.choice<IntegralMode>(node["integral"], "integral",
                                             {{"drop", IntegralMode::DropConstant},
                                              {"full", IntegralMode::Full}});
  }
  r.read(node, "t_scale", f.t_scale);
  r.read(node, "t_dof", f.t_dof);
  r.read(node, "particles", f.spec.particles);
  if (node["resampling"]) {
    f.spec.resampling = r.choice<ResamplingScheme>(node["resampling"], "resampling",
                                                   {{"multinomial", ResamplingScheme::Multinomial},
                                                    {"systematic", ResamplingScheme::Systematic}});
  }
  if (const YAML::Node e = node["ess_threshold"]) {
    f.spec.trigger = ResampleTrigger::ess_below(r.scalar<double>(e, "ess_threshold"));
  }
  r.read(node, "apf_stabiliser", f.spec.apf_stabiliser_fraction);
  r.read(node, "predictive_draws", f.spec.predictive_draws);
  r.read(node, "predictive_noise", f.spec.predictive_noise);
  if (node["backend"]) {
    f.spec.backend = r.choice<Backend>(node["backend"], "backend",
                                       {{"parallel", Backend::Parallel},
                                        {"reference", Backend::Reference}});
  }
  r.read(node, "smoother_trajectories", f.smoother_trajectories);
  if (const YAML::Node n = node["name"]) {
    f.name = r.scalar<std::string>(n, "name");
  } else {
    f.name = f.type == FilterType::Kalman ? "kalman" : f.type == FilterType::Auxiliary ? "apf" : "bpf";
    if (f.beta) f.name = "beta-" + f.name + "(" + format_double(*f.beta) + ")";
  }
  try {
    if (f.type != FilterType::Kalman) f.spec.validate();
  } catch (const ConfigError& e) {
    r.fail(node, e.what());
  }
  return f;
}

}  // namespace

const char* library_version() { return RSMC_VERSION; }

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  const Reader r(origin);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(origin + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  if (!root || root.IsNull()) throw ConfigError(origin + ": empty configuration");
  r.check_keys(root,
               {"schema_version", "experiment", "runs", "base_seed", "data_seed", "output_dir",
                "medae", "write_trajectories", "threads", "simulator", "filters",
                "beta_selection"},
               "configuration");
  if (!root["schema_version"]) r.fail(root, "missing 'schema_version'");
  const int version = r.scalar<int>(root["schema_version"], "schema_version");
  if (version != kConfigSchemaVersion) {
    r.fail(root["schema_version"], "unsupported schema_version " + std::to_string(version) +
                                       " (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }
  if (!root["experiment"]) r.fail(root, "missing 'experiment'");
  const auto kind = r.choice<ExperimentKind>(root["experiment"], "experiment", kExperiments);
  ExperimentConfig cfg = default_config(kind);

  const std::filesystem::path base_dir =
      origin.front() == '<' ? std::filesystem::path(".") : std::filesystem::path(origin).parent_path();

  r.read(root, "runs", cfg.runs);
  r.read(root, "base_seed", cfg.base_seed);
  r.read(root, "data_seed", cfg.data_seed);
  if (const YAML::Node o = root["output_dir"]) cfg.output_dir = r.scalar<std::string>(o, "output_dir");
  if (root["medae"]) {
    cfg.medae = r.choice<MedaeMode>(root["medae"], "medae",
                                    {{"point", MedaeMode::PredictiveMean},
                                     {"single", MedaeMode::SingleDraw},
                                     {"mean_abs", MedaeMode::MeanOverDraws}});
  }
  r.read(root, "write_trajectories", cfg.write_trajectories);
  r.read(root, "threads", cfg.threads);
  if (const YAML::Node s = root["simulator"]) read_simulator(r, s, cfg.simulator, base_dir);
  if (const YAML::Node fs = root["filters"]) {
    if (!fs.IsSequence()) r.fail(fs, "'filters' must be a list");
    cfg.filters.clear();
    std::set<std::string> names;
    for (const auto& f : fs) {
      cfg.filters.push_back(read_filter(r, f));
      if (!names.insert(cfg.filters.back().name).second) {
        r.fail(f, "duplicate filter name '" + cfg.filters.back().name + "'");
      }
    }
  }
  if (const YAML::Node b = root["beta_selection"]) {
    r.check_keys(b, {"grid", "runs", "predictive_samples", "weighting", "tuning_fraction", "filter"},
                 "beta_selection");
    SelectionSettings sel;
    sel.filter.name = "bpf";
    if (const YAML::Node g = b["grid"]) sel.config.grid = r.doubles(g, "grid");
    r.read(b, "runs", sel.runs);
    r.read(b, "predictive_samples", sel.config.predictive_samples);
    r.read(b, "tuning_fraction", sel.tuning_fraction);
    if (b["weighting"]) {
      sel.config.weighting = r.choice<DimensionWeighting>(
          b["weighting"], "weighting",
          {{"inverse_median", DimensionWeighting::InverseMedian}, {"none", DimensionWeighting::None}});
    }
    if (const YAML::Node f = b["filter"]) sel.filter = read_filter(r, f);
    if (sel.filter.type == FilterType::Kalman) r.fail(b, "beta selection needs a particle filter");
    try {
      sel.config.validate();
    } catch (const ConfigError& e) {
      r.fail(b, e.what());
    }
    cfg.beta_selection = sel;
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

}  // namespace rsmc
