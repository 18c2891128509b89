#include <CLI11.hpp>
#include <openssl/sha.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bhkam/version.hpp"
#include "pipelines.hpp"

namespace fs = std::filesystem;
using namespace bhkam;
using namespace bhkam::cli;

namespace {

enum Exit { kPass = 0, kCheckFailure = 1, kConfigError = 2, kCapacityError = 3 };

// Git blob hash: SHA-1 of "blob <size>\0" followed by the content.
std::string git_blob_sha1(const std::string& content) {
  const std::string data = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

Json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("malformed JSON in " + path);
  return j;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resonance-split current decomposition toolkit for the Bose-Hubbard chain"};
  std::string subcommand;
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  std::vector<std::string> overrides;
  app.add_option("subcommand", subcommand, "Pipeline to run")->required()->check(CLI::IsMember(kSubcommands));
  app.add_option("--config", config_path, "JSON run config");
  app.add_option("--out", out_dir, "Output directory (overrides output.dir)");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides seed)");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (overrides threads)")->check(CLI::PositiveNumber);
  app.add_option("--override", overrides, "key=value with a dotted key, applied after loading the config");
  app.set_version_flag("--version", kVersion);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigError;
  }

  RunConfig cfg;
  try {
    Json root = config_path.empty() ? Json::object() : load_config(config_path);
    if (!root.is_object()) throw ConfigError("config must be a JSON object");
    if (root.contains("subcommand") && root["subcommand"] != subcommand)
      throw ConfigError("config names subcommand " + root["subcommand"].dump() + " but " + subcommand + " was requested");
    root["subcommand"] = subcommand;
    for (const auto& o : overrides) apply_override(root, o);
    if (*seed_opt) root["seed"] = seed;
    if (*threads_opt) root["threads"] = threads;
    if (!out_dir.empty()) root["output"]["dir"] = out_dir;
    cfg = parse_run_config(root);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  const Json resolved = resolved_json(cfg);
  // The output location is not a parameter, so it stays out of the hash.
  Json hashed = resolved;
  hashed.erase("output");
  const std::string config_hash = git_blob_sha1(hashed.dump());
  const auto start = std::chrono::steady_clock::now();
  RunOutput result;
  try {
    result = run_pipeline(cfg);
  } catch (const CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << '\n';
    return kCapacityError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool passed = result.passed();

  // Artifacts are written only after the pipeline finished, so failed runs leave none behind.
  try {
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    std::ostringstream results, checks;
    write_results_csv(results, result.rows, config_hash);
    write_checks_csv(checks, result.checks);
    Json artifacts = Json::array();
    auto emit = [&](const std::string& name, const std::string& content) {
      write_file(dir / name, content);
      artifacts.push_back({{"file", name}, {"sha1", git_blob_sha1(content)}});
    };
    emit("results.csv", results.str());
    emit("checks.csv", checks.str());
    if (!result.replay.empty()) emit("replay.json", result.replay.dump(2) + "\n");
    Json manifest;
    manifest["version"] = kVersion;
    manifest["subcommand"] = cfg.subcommand;
    manifest["config"] = resolved;
    manifest["config_hash"] = config_hash;
    manifest["seed"] = cfg.seed;
    manifest["threads"] = cfg.threads;
    manifest["timings"] = {{"pipeline_seconds", seconds}};
    manifest["stamps"] = result.stamps;
    manifest["checks_passed"] = passed;
    manifest["exit_code"] = passed ? kPass : kCheckFailure;
    manifest["artifacts"] = artifacts;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "output error: " << e.what() << '\n';
    return kConfigError;
  }

  for (const auto& c : result.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.check << " value=" << format_number(c.value)
              << " tol=" << format_number(c.tolerance) << '\n';
  return passed ? kPass : kCheckFailure;
}
