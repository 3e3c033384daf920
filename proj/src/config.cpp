#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "pmpsc/errors.hpp"
#include "pmpsc/pipeline.hpp"

namespace pmpsc {

namespace {

// Reads keys of one table, remembering which were consumed so typos surface
// as errors instead of silently falling back to defaults.
class Section {
 public:
  Section(const toml::table* t, std::string name) : t_(t), name_(std::move(name)) {}

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!t_) return;
    const toml::node* n = t_->get(key);
    if (!n) return;
    if constexpr (std::is_same_v<T, bool>) {
      auto v = n->value<bool>();
      PMPSC_THROW_UNLESS(v.has_value(), ConfigError, where(key) + " must be a boolean");
      out = *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
      auto v = n->value<std::string>();
      PMPSC_THROW_UNLESS(v.has_value(), ConfigError, where(key) + " must be a string");
      out = *v;
    } else if constexpr (std::is_integral_v<T>) {
      auto v = n->value<std::int64_t>();
      PMPSC_THROW_UNLESS(v.has_value(), ConfigError, where(key) + " must be an integer");
      out = static_cast<T>(*v);
    } else {
      auto v = n->value<double>();
      PMPSC_THROW_UNLESS(v.has_value(), ConfigError, where(key) + " must be a number");
      out = *v;
    }
  }

  template <class Vec>
  void vector(const char* key, Vec& out, int expected = -1) {
    used_.insert(key);
    if (!t_) return;
    const toml::node* n = t_->get(key);
    if (!n) return;
    const toml::array* a = n->as_array();
    PMPSC_THROW_UNLESS(a, ConfigError, where(key) + " must be an array");
    PMPSC_THROW_UNLESS(expected < 0 || static_cast<int>(a->size()) == expected, ConfigError,
                       where(key) + " must have " + std::to_string(expected) + " entries");
    Eigen::VectorXd v(a->size());
    for (std::size_t i = 0; i < a->size(); ++i) {
      auto x = (*a)[i].value<double>();
      PMPSC_THROW_UNLESS(x.has_value(), ConfigError, where(key) + " entries must be numbers");
      v[i] = *x;
    }
    out = v;
  }

  void matrix(const char* key, Eigen::MatrixXd& out) {
    used_.insert(key);
    if (!t_) return;
    const toml::node* n = t_->get(key);
    if (!n) return;
    const toml::array* rows = n->as_array();
    PMPSC_THROW_UNLESS(rows && !rows->empty(), ConfigError, where(key) + " must be an array of rows");
    Eigen::MatrixXd M;
    for (std::size_t i = 0; i < rows->size(); ++i) {
      const toml::array* r = (*rows)[i].as_array();
      PMPSC_THROW_UNLESS(r, ConfigError, where(key) + " rows must be arrays");
      if (i == 0) M.resize(rows->size(), r->size());
      PMPSC_THROW_UNLESS(static_cast<Eigen::Index>(r->size()) == M.cols(), ConfigError,
                         where(key) + " rows must have equal length");
      for (std::size_t j = 0; j < r->size(); ++j) {
        auto x = (*r)[j].value<double>();
        PMPSC_THROW_UNLESS(x.has_value(), ConfigError, where(key) + " entries must be numbers");
        M(i, j) = *x;
      }
    }
    out = M;
  }

  void known(const char* key) { used_.insert(key); }

  void finish() const {
    if (!t_) return;
    for (const auto& [k, v] : *t_) {
      (void)v;
      PMPSC_THROW_UNLESS(used_.count(std::string(k.str())), ConfigError,
                         "unknown key " + where(std::string(k.str())));
    }
  }

 private:
  std::string where(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }
  const toml::table* t_;
  std::string name_;
  std::set<std::string> used_;
};

toml::array to_array(const Eigen::VectorXd& v) {
  toml::array a;
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

toml::array to_array(const Eigen::MatrixXd& M) {
  toml::array a;
  for (Eigen::Index i = 0; i < M.rows(); ++i) a.push_back(to_array(Eigen::VectorXd(M.row(i).transpose())));
  return a;
}

std::string scale_name(VertexScale s) { return s == VertexScale::Sqrt2 ? "sqrt2" : "sqrtd"; }
std::string shape_name(RisShape s) { return s == RisShape::Invariant ? "invariant" : "lqr"; }
std::string method_name(QpMethod m) { return m == QpMethod::Admm ? "admm" : "interior_point"; }

RunConfig parse(const toml::table& root) {
  RunConfig c;
  Section top(&root, "");
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  for (const char* t : {"plant", "reference", "limits", "excitation", "design", "filter", "train", "validate"}) {
    top.known(t);
    const toml::node* n = root.get(t);
    PMPSC_THROW_UNLESS(!n || n->is_table(), ConfigError, std::string(t) + " must be a table");
  }
  top.finish();
  auto table = [&](const char* k) { return root.get(k) ? root.get(k)->as_table() : nullptr; };

  Section p(table("plant"), "plant");
  p.get("T_delta", c.plant.T_delta);
  p.get("T_a", c.plant.T_a);
  p.get("L", c.plant.L);
  p.get("v_ch", c.plant.v_ch);
  p.get("dt", c.plant.dt);
  p.get("substeps", c.plant.substeps);
  p.vector("noise_std", c.plant.noise_std, 6);
  p.finish();

  Section r(table("reference"), "reference");
  r.get("speed", c.reference.speed);
  r.get("amplitude", c.reference.amplitude);
  r.get("period", c.reference.period);
  r.finish();

  Section l(table("limits"), "limits");
  l.get("y_max", c.limits.y_max);
  l.get("delta_max", c.limits.delta_max);
  l.get("v_max", c.limits.v_max);
  l.get("a_min", c.limits.a_min);
  l.get("a_max", c.limits.a_max);
  l.get("u_delta_max", c.limits.u_delta_max);
  l.get("u_a_min", c.limits.u_a_min);
  l.get("u_a_max", c.limits.u_a_max);
  l.get("x_dev_max", c.limits.x_dev_max);
  l.get("theta_max", c.limits.theta_max);
  l.get("v_dev_max", c.limits.v_dev_max);
  l.finish();

  Section e(table("excitation"), "excitation");
  e.get("samples", c.excitation.samples);
  e.get("smoothing", c.excitation.smoothing);
  e.vector("amplitude", c.excitation.amplitude, 2);
  e.matrix("gain", c.excitation.gain);
  e.get("measurement_noise", c.excitation.measurement_noise);
  e.get("retries", c.excitation.retries);
  e.get("shrink", c.excitation.shrink);
  e.get("inflate", c.excitation.inflate);
  e.finish();

  Section d(table("design"), "design");
  d.get("prior_variance", c.design.prior_variance);
  d.get("sigma_s", c.design.sigma_s);
  d.get("p_x", c.design.p_x);
  d.get("p_u", c.design.p_u);
  std::string scale = scale_name(c.design.vertex_scale), shape = shape_name(c.design.shape);
  d.get("vertex_scale", scale);
  d.get("ris_shape", shape);
  PMPSC_THROW_UNLESS(scale == "sqrt2" || scale == "sqrtd", ConfigError, "design.vertex_scale: sqrt2 | sqrtd");
  PMPSC_THROW_UNLESS(shape == "invariant" || shape == "lqr", ConfigError, "design.ris_shape: invariant | lqr");
  c.design.vertex_scale = scale == "sqrt2" ? VertexScale::Sqrt2 : VertexScale::SqrtD;
  c.design.shape = shape == "invariant" ? RisShape::Invariant : RisShape::Lqr;
  d.get("gaussian", c.design.gaussian);
  d.vector("q_lqr", c.design.q_lqr);
  d.vector("r_lqr", c.design.r_lqr);
  d.get("max_condition", c.design.max_condition);
  d.get("max_vertices", c.design.max_vertices);
  d.finish();

  Section f(table("filter"), "filter");
  f.get("horizon", c.filter.horizon);
  f.get("cert_tolerance", c.filter.cert_tolerance);
  f.get("constraint_margin", c.filter.constraint_margin);
  std::string method = method_name(c.filter.qp.method);
  f.get("qp_method", method);
  PMPSC_THROW_UNLESS(method == "admm" || method == "interior_point", ConfigError,
                     "filter.qp_method: admm | interior_point");
  c.filter.qp.method = method == "admm" ? QpMethod::Admm : QpMethod::InteriorPoint;
  f.get("qp_tol", c.filter.qp.tol);
  f.finish();

  Section t(table("train"), "train");
  t.get("step_size", c.train.ars.step_size);
  t.get("directions", c.train.ars.num_directions);
  t.get("top_b", c.train.ars.top_b);
  t.get("perturbation_std", c.train.ars.perturbation_std);
  t.get("episode_length", c.train.ars.episode_length);
  t.get("episodes", c.train.episodes);
  t.get("baseline_episodes", c.train.baseline_episodes);
  t.get("init_std", c.train.init_std);
  t.get("trajectory_every", c.train.trajectory_every);
  t.finish();
  c.train.ars.seed = c.seed;

  Section v(table("validate"), "validate");
  v.get("seeds", c.validate.seeds);
  v.get("steps", c.validate.steps);
  v.get("threads", c.validate.threads);
  v.finish();

  c.validate_fields();
  return c;
}

}  // namespace

RunConfig RunConfig::from_toml_string(const std::string& text) {
  try {
    return parse(toml::parse(text));
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " at " << e.source().begin;
    throw ConfigError(os.str());
  }
}

RunConfig RunConfig::from_toml_file(const std::string& path) {
  std::ifstream in(path);
  PMPSC_THROW_UNLESS(in, IoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_toml_string(ss.str());
}

std::string RunConfig::to_toml() const {
  toml::table root;
  root.insert("seed", static_cast<std::int64_t>(seed));
  root.insert("output_dir", output_dir);
  root.insert("plant", toml::table{{"T_delta", plant.T_delta},
                                   {"T_a", plant.T_a},
                                   {"L", plant.L},
                                   {"v_ch", plant.v_ch},
                                   {"dt", plant.dt},
                                   {"substeps", plant.substeps},
                                   {"noise_std", to_array(Eigen::VectorXd(plant.noise_std))}});
  root.insert("reference", toml::table{{"speed", reference.speed},
                                       {"amplitude", reference.amplitude},
                                       {"period", reference.period}});
  root.insert("limits", toml::table{{"y_max", limits.y_max},
                                    {"delta_max", limits.delta_max},
                                    {"v_max", limits.v_max},
                                    {"a_min", limits.a_min},
                                    {"a_max", limits.a_max},
                                    {"u_delta_max", limits.u_delta_max},
                                    {"u_a_min", limits.u_a_min},
                                    {"u_a_max", limits.u_a_max},
                                    {"x_dev_max", limits.x_dev_max},
                                    {"theta_max", limits.theta_max},
                                    {"v_dev_max", limits.v_dev_max}});
  root.insert("excitation", toml::table{{"samples", excitation.samples},
                                        {"smoothing", excitation.smoothing},
                                        {"amplitude", to_array(Eigen::VectorXd(excitation.amplitude))},
                                        {"gain", to_array(excitation.gain)},
                                        {"measurement_noise", excitation.measurement_noise},
                                        {"retries", excitation.retries},
                                        {"shrink", excitation.shrink},
                                        {"inflate", excitation.inflate}});
  toml::table d{{"prior_variance", design.prior_variance},
                {"sigma_s", design.sigma_s},
                {"p_x", design.p_x},
                {"p_u", design.p_u},
                {"vertex_scale", scale_name(design.vertex_scale)},
                {"ris_shape", shape_name(design.shape)},
                {"gaussian", design.gaussian},
                {"max_condition", design.max_condition},
                {"max_vertices", design.max_vertices}};
  if (design.q_lqr.size()) d.insert("q_lqr", to_array(design.q_lqr));
  if (design.r_lqr.size()) d.insert("r_lqr", to_array(design.r_lqr));
  root.insert("design", std::move(d));
  root.insert("filter", toml::table{{"horizon", filter.horizon},
                                    {"cert_tolerance", filter.cert_tolerance},
                                    {"constraint_margin", filter.constraint_margin},
                                    {"qp_method", method_name(filter.qp.method)},
                                    {"qp_tol", filter.qp.tol}});
  root.insert("train", toml::table{{"step_size", train.ars.step_size},
                                   {"directions", train.ars.num_directions},
                                   {"top_b", train.ars.top_b},
                                   {"perturbation_std", train.ars.perturbation_std},
                                   {"episode_length", train.ars.episode_length},
                                   {"episodes", train.episodes},
                                   {"baseline_episodes", train.baseline_episodes},
                                   {"init_std", train.init_std},
                                   {"trajectory_every", train.trajectory_every}});
  root.insert("validate", toml::table{{"seeds", validate.seeds},
                                      {"steps", validate.steps},
                                      {"threads", validate.threads}});
  std::ostringstream os;
  os << root << "\n";
  return os.str();
}

}  // namespace pmpsc
