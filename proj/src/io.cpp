#include "pmpsc/io.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "pmpsc/errors.hpp"

namespace pmpsc::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

json mat(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(std::move(r));
  }
  return json{{"rows", M.rows()}, {"cols", M.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd mat(const json& j) {
  const auto r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
  const json& d = j.at("data");
  PMPSC_THROW_UNLESS(static_cast<Eigen::Index>(d.size()) == r, IoError, "matrix row count");
  Eigen::MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    PMPSC_THROW_UNLESS(static_cast<Eigen::Index>(d[i].size()) == c, IoError, "matrix column count");
    for (Eigen::Index j2 = 0; j2 < c; ++j2) M(i, j2) = d[i][j2].get<double>();
  }
  return M;
}

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vec(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

json poly(const HPolytope& p) { return json{{"H", mat(p.H())}, {"h", vec(p.h())}}; }
HPolytope poly(const json& j) { return HPolytope(mat(j.at("H")), vec(j.at("h"))); }

template <class F>
auto parse(const std::string& text, const char* what, F&& f) {
  try {
    return f(json::parse(text));
  } catch (const json::exception& e) {
    throw IoError(std::string(what) + ": " + e.what());
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, p, ec);
  if (ec) throw IoError("cannot rename onto " + path + ": " + ec.message());
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_text(path)); }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string dataset_to_csv(const Dataset& d) {
  std::string out;
  const int n = d.n(), m = d.m();
  for (int i = 0; i < n; ++i) out += "x" + std::to_string(i) + ",";
  for (int i = 0; i < m; ++i) out += "u" + std::to_string(i) + ",";
  for (int i = 0; i < n; ++i) out += "y" + std::to_string(i) + (i + 1 < n ? "," : "\n");
  for (const auto& r : d.records()) {
    for (int i = 0; i < n; ++i) out += format_double(r.x[i]) + ",";
    for (int i = 0; i < m; ++i) out += format_double(r.u[i]) + ",";
    for (int i = 0; i < n; ++i) out += format_double(r.y[i]) + (i + 1 < n ? "," : "\n");
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset: empty file");
  int n = 0, m = 0;
  for (const auto& h : split(line, ',')) {
    if (h.empty()) throw IoError("dataset: empty header cell");
    if (h[0] == 'x') ++n;
    else if (h[0] == 'u') ++m;
  }
  PMPSC_THROW_UNLESS(n > 0 && m > 0, IoError, "dataset: header needs x and u columns");
  Dataset d(n, m);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    PMPSC_THROW_UNLESS(static_cast<int>(cells.size()) == 2 * n + m, IoError,
                       "dataset: wrong column count on line " + std::to_string(lineno));
    Eigen::VectorXd row(2 * n + m);
    for (int i = 0; i < 2 * n + m; ++i) {
      try {
        std::size_t pos = 0;
        row[i] = std::stod(cells[i], &pos);
        if (pos != cells[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw IoError("dataset: bad number on line " + std::to_string(lineno));
      }
    }
    d.add(row.head(n), row.segment(n, m), row.tail(n));
  }
  return d;
}

std::string controller_to_json(const Controller& c) {
  json j{{"A", mat(c.A)},       {"B", mat(c.B)},       {"K", mat(c.K)},
         {"X", poly(c.X)},      {"U", poly(c.U)},      {"X_tight", poly(c.X_tight)},
         {"U_tight", poly(c.U_tight)}};
  return j.dump(1) + "\n";
}

Controller controller_from_json(const std::string& text) {
  return parse(text, "controller", [](const json& j) {
    return Controller{mat(j.at("A")), mat(j.at("B")),       mat(j.at("K")),        poly(j.at("X")),
                      poly(j.at("U")), poly(j.at("X_tight")), poly(j.at("U_tight"))};
  });
}

std::string terminal_to_json(const TerminalSet& t) {
  json verts = json::array();
  for (const auto& v : t.vertices())
    verts.push_back({{"id", v.id}, {"point", vec(v.point)}, {"v", mat(v.plan.v)}, {"z", mat(v.plan.z)}});
  json j{{"n", t.n()},
         {"m", t.m()},
         {"horizon", t.horizon()},
         {"max_vertices", t.max_vertices()},
         {"generation", t.generation()},
         {"next_id", t.next_id()},
         {"vertices", std::move(verts)}};
  return j.dump(1) + "\n";
}

TerminalSet terminal_from_json(const std::string& text) {
  return parse(text, "terminal set", [](const json& j) {
    std::vector<TerminalVertex> verts;
    for (const auto& v : j.at("vertices"))
      verts.push_back({v.at("id").get<int>(), vec(v.at("point")), NominalPlan{mat(v.at("v")), mat(v.at("z"))}});
    return TerminalSet::restore(j.at("n").get<int>(), j.at("m").get<int>(), j.at("horizon").get<int>(),
                                j.at("max_vertices").get<int>(), j.at("generation").get<int>(),
                                j.at("next_id").get<int>(), std::move(verts));
  });
}

std::string posterior_to_json(const BLRPosterior& p) {
  json prec = json::array(), prior = json::array();
  for (const auto& C : p.precisions) prec.push_back(mat(C));
  for (const auto& S : p.prior_covs) prior.push_back(mat(S));
  json j{{"n", p.n},          {"m", p.m},           {"sigma_s", p.sigma_s},
         {"mean", mat(p.mean)}, {"precisions", prec}, {"prior_covs", prior}};
  return j.dump(1) + "\n";
}

BLRPosterior posterior_from_json(const std::string& text) {
  return parse(text, "posterior", [](const json& j) {
    BLRPosterior p;
    p.n = j.at("n").get<int>();
    p.m = j.at("m").get<int>();
    p.sigma_s = j.at("sigma_s").get<double>();
    p.mean = mat(j.at("mean"));
    for (const auto& C : j.at("precisions")) p.precisions.push_back(mat(C));
    for (const auto& S : j.at("prior_covs")) p.prior_covs.push_back(mat(S));
    return p;
  });
}

std::string policy_to_json(const LinearPolicy& p) { return json{{"M", mat(p.M)}}.dump(1) + "\n"; }

LinearPolicy policy_from_json(const std::string& text) {
  return parse(text, "policy", [](const json& j) { return LinearPolicy{mat(j.at("M"))}; });
}

std::string design_report_json(const DesignResult& d) {
  const int n = static_cast<int>(d.A.rows()), m = static_cast<int>(d.B.cols());
  const SupportSet input_tube = d.tube.input_tube();
  json sx = json::array(), su = json::array();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(n, i);
    sx.push_back({d.tube.R_x.support(e), d.tube.R_x.support(-e)});
  }
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(m, i);
    su.push_back({input_tube.support(e), input_tube.support(-e)});
  }
  auto bounds = [](const HPolytope& p) {
    if (!p.is_box()) return poly(p);
    const auto [lo, hi] = p.box_bounds();
    return json{{"lo", vec(lo)}, {"hi", vec(hi)}};
  };
  json j{{"w_max_x", d.bound_x.w_max},
         {"w_max_u", d.bound_u.w_max},
         {"p_m", d.bound_x.p_m},
         {"alpha_x", d.tube.alpha_x},
         {"alpha_u", d.tube.alpha_u},
         {"regressor_condition", d.regressor_condition},
         {"state_tube_support", sx},
         {"input_tube_support", su},
         {"K", mat(d.tube.K)},
         {"A", mat(d.A)},
         {"B", mat(d.B)},
         {"X_tight", bounds(d.tight.X)},
         {"U_tight", bounds(d.tight.U)},
         {"terminal_vertices", d.terminal.size()}};
  return j.dump(1) + "\n";
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Manifest::Manifest(std::string run_dir) : run_dir_(std::move(run_dir)) {}

std::string Manifest::path_of(const std::string& relative) const {
  return (fs::path(run_dir_) / relative).string();
}

Manifest Manifest::load(const std::string& run_dir) {
  Manifest m(run_dir);
  const std::string p = m.path_of("manifest.json");
  if (!fs::exists(p)) return m;
  return parse(read_text(p), "manifest", [&](const json& j) {
    m.config_hash_ = j.value("config_hash", "");
    for (const auto& [name, a] : j.at("artifacts").items())
      m.artifacts_[name] = {a.at("path").get<std::string>(), a.at("sha256").get<std::string>()};
    for (const auto& s : j.at("stages"))
      m.stages_.push_back({s.at("name").get<std::string>(), s.at("started").get<std::string>(),
                           s.at("finished").get<std::string>(), s.at("passed").get<bool>()});
    return m;
  });
}

void Manifest::save() const {
  json arts = json::object();
  for (const auto& [name, a] : artifacts_) arts[name] = {{"path", a.path}, {"sha256", a.sha256}};
  json stages = json::array();
  for (const auto& s : stages_)
    stages.push_back({{"name", s.name}, {"started", s.started}, {"finished", s.finished}, {"passed", s.passed}});
  json versions{{"pmpsc", kVersion},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                {"compiler", __VERSION__}};
  json j{{"config_hash", config_hash_}, {"artifacts", arts}, {"stages", stages}, {"versions", versions}};
  write_text(path_of("manifest.json"), j.dump(1) + "\n");
}

void Manifest::set_config(const std::string& toml_text) { config_hash_ = sha256_hex(toml_text); }

void Manifest::write_artifact(const std::string& name, const std::string& relative, const std::string& text) {
  write_text(path_of(relative), text);
  artifacts_[name] = {relative, sha256_hex(text)};
}

std::string Manifest::read_artifact(const std::string& name) const {
  const auto it = artifacts_.find(name);
  if (it == artifacts_.end()) throw IoError("manifest has no artifact '" + name + "'");
  const std::string text = read_text(path_of(it->second.path));
  if (sha256_hex(text) != it->second.sha256)
    throw IoError("artifact '" + name + "' (" + it->second.path + ") does not match its recorded hash");
  return text;
}

void Manifest::record_stage(const std::string& name, const std::string& started, bool passed) {
  stages_.push_back({name, started, utc_timestamp(), passed});
}

std::vector<std::string> Manifest::verify() const {
  std::vector<std::string> problems;
  for (const auto& [name, a] : artifacts_) {
    const std::string p = path_of(a.path);
    if (!fs::exists(p)) {
      problems.push_back(name + ": missing " + a.path);
      continue;
    }
    if (sha256_file(p) != a.sha256) problems.push_back(name + ": hash mismatch for " + a.path);
  }
  return problems;
}

}  // namespace pmpsc::io
