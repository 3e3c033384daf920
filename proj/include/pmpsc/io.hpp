#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmpsc/ars.hpp"
#include "pmpsc/model.hpp"
#include "pmpsc/pipeline.hpp"
#include "pmpsc/terminal.hpp"

// Persistence of run artifacts. Structured artifacts are JSON, tables are CSV
// with %.17g numbers so every double round-trips bit-exactly.
namespace pmpsc::io {

std::string read_text(const std::string& path);
// Writes through a temporary file and renames, so readers never see a
// half-written artifact. Creates parent directories.
void write_text(const std::string& path, const std::string& text);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

std::string format_double(double v);

// Columns x0..x{n-1}, u0..u{m-1}, y0..y{n-1}.
std::string dataset_to_csv(const Dataset& d);
Dataset dataset_from_csv(const std::string& text);

std::string controller_to_json(const Controller& c);
Controller controller_from_json(const std::string& text);

std::string terminal_to_json(const TerminalSet& t);
TerminalSet terminal_from_json(const std::string& text);

std::string posterior_to_json(const BLRPosterior& p);
BLRPosterior posterior_from_json(const std::string& text);

std::string policy_to_json(const LinearPolicy& p);
LinearPolicy policy_from_json(const std::string& text);

// Human-oriented summary of a design: w_max, alpha, axis supports of the
// tubes, tightened bounds.
std::string design_report_json(const DesignResult& d);

// Bookkeeping for a run directory. Artifact paths are relative to the run
// directory; each carries the SHA-256 of its content at registration time.
class Manifest {
 public:
  struct Artifact {
    std::string path;
    std::string sha256;
  };
  struct Stage {
    std::string name;
    std::string started, finished;  // ISO-8601 UTC
    bool passed = false;
  };

  explicit Manifest(std::string run_dir);
  // Loads run_dir/manifest.json when present, else an empty manifest.
  static Manifest load(const std::string& run_dir);
  void save() const;

  const std::string& run_dir() const { return run_dir_; }
  std::string path_of(const std::string& relative) const;

  void set_config(const std::string& toml_text);
  const std::string& config_hash() const { return config_hash_; }

  // Writes the file and records its hash.
  void write_artifact(const std::string& name, const std::string& relative, const std::string& text);
  // Content of a registered artifact; throws IoError when it is missing or
  // its hash no longer matches.
  std::string read_artifact(const std::string& name) const;
  bool has_artifact(const std::string& name) const { return artifacts_.count(name) > 0; }
  const std::map<std::string, Artifact>& artifacts() const { return artifacts_; }

  void record_stage(const std::string& name, const std::string& started, bool passed);
  const std::vector<Stage>& stages() const { return stages_; }

  // Problems found when re-hashing every artifact (empty when intact).
  std::vector<std::string> verify() const;

 private:
  std::string run_dir_;
  std::string config_hash_;
  std::map<std::string, Artifact> artifacts_;
  std::vector<Stage> stages_;
};

std::string utc_timestamp();

}  // namespace pmpsc::io
