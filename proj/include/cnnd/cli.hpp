// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Lives in a header so tests can drive it in-process.
//
// Exit codes: 0 success, 1 verification failure, 2 operational error.
// Reports go to `out` as key=value lines; per-layer timings go to `err`.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cnnd/autotune.hpp"
#include "cnnd/bench.hpp"
#include "cnnd/engine.hpp"
#include "cnnd/netfile.hpp"
#include "cnnd/profile_file.hpp"
#include "cnnd/synth.hpp"
#include "cnnd/tensor_io.hpp"

namespace cnnd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitError = 2;

inline NetConfig read_netfile(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open NetFile '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_netfile(ss.str());
  } catch (const ParseError& e) {
    throw Error(path.string() + ":" + e.what());
  }
}

inline Shape4 netfile_input(const NetConfig& cfg, std::size_t batch) {
  if (!cfg.input_shape) throw Error("NetFile has no input_shape");
  const auto& s = *cfg.input_shape;
  return {batch, s[0], s[1], s[2]};
}

inline std::optional<ExecutionMode> mode_flag(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s == "sequential" ? ExecutionMode::sequential : ExecutionMode::parallel;
}

inline std::string ms(double ns) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(4) << ns / 1e6;
  return o.str();
}

/// Runs the tuner on `sample` and writes <model_dir>/tuning.profile.
inline TuneReport tune_and_save(const NetConfig& cfg, const std::filesystem::path& model_dir,
                                const Tensor& sample, int reps) {
  const Network net = build_network(cfg, model_dir, sample.shape());
  TuneReport report = tune(net, sample, reps);
  save_profile(model_dir / kProfileFileName, report.chosen, report.host);
  return report;
}

/// Tunes once when the NetFile asks for it and no profile exists yet.
inline bool ensure_tuned(const NetConfig& cfg, const std::filesystem::path& model_dir,
                         const Tensor& sample, std::ostream& out) {
  if (!cfg.auto_tuning || std::filesystem::exists(model_dir / kProfileFileName)) return false;
  const TuneReport r = tune_and_save(cfg, model_dir, sample, 3);
  out << "auto_tuned=" << to_string(r.chosen) << "\n";
  return true;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Run, verify, benchmark and tune CNN models described by a NetFile."};
  app.name("cnnd");
  app.require_subcommand(1);

  std::string netfile, model_dir, input, output, reference, mode;
  bool include_io = false, force = false;
  double threshold = 1e-10;
  std::size_t batch = 16;
  int reps = 10;
  std::uint64_t seed = 1;
  const auto modes = CLI::IsMember({"sequential", "parallel"});

  auto* run = app.add_subcommand("run", "Execute a network on an input tensor file");
  run->add_option("netfile", netfile)->required();
  run->add_option("model_dir", model_dir)->required();
  run->add_option("input", input)->required();
  run->add_option("output", output)->required();
  run->add_option("--mode", mode, "Override execution_mode")->check(modes);
  run->add_flag("--include-io", include_io, "Count parameter loading in timings");

  auto* verify = app.add_subcommand("verify", "Compare the output against a reference tensor");
  verify->add_option("netfile", netfile)->required();
  verify->add_option("model_dir", model_dir)->required();
  verify->add_option("input", input)->required();
  verify->add_option("reference", reference)->required();
  verify->add_option("--threshold", threshold, "Maximum accepted MSE")->capture_default_str();
  verify->add_option("--mode", mode, "Override execution_mode")->check(modes);

  auto* bench = app.add_subcommand("benchmark", "Per-image runtime, sequential vs parallel");
  bench->add_option("netfile", netfile)->required();
  bench->add_option("model_dir", model_dir)->required();
  bench->add_option("--batch", batch, "Images per batch")->capture_default_str()->check(
      CLI::PositiveNumber);
  bench->add_option("--reps", reps, "Timed repetitions")->capture_default_str()->check(
      CLI::PositiveNumber);
  bench->add_option("--mode", mode, "Mode compared against sequential")->check(modes);
  bench->add_flag("--include-io", include_io, "Count parameter loading in timings");

  int tune_reps = 5;
  std::size_t tune_batch = 1;
  auto* tune_cmd = app.add_subcommand("tune", "Pick the fastest tuning profile for this host");
  tune_cmd->add_option("netfile", netfile)->required();
  tune_cmd->add_option("model_dir", model_dir)->required();
  tune_cmd->add_flag("--force", force, "Re-tune even if a profile exists or tuning is off");
  tune_cmd->add_option("--reps", tune_reps, "Timed runs per candidate (odd, >= 3)")
      ->capture_default_str();
  tune_cmd->add_option("--batch", tune_batch, "Images in the tuning sample")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  std::size_t input_batch = 1;
  auto* synth = app.add_subcommand("synth", "Write seeded random parameters for a NetFile");
  synth->add_option("netfile", netfile)->required();
  synth->add_option("model_dir", model_dir)->required();
  synth->add_option("--seed", seed)->capture_default_str();
  synth->add_option("--input", input, "Also write a random input tensor file here");
  synth->add_option("--batch", input_batch, "Images in the --input tensor")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  std::vector<const char*> argv{"cnnd"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    const NetConfig cfg = read_netfile(netfile);
    const std::filesystem::path dir = model_dir;

    if (*run || *verify) {
      const Tensor in = read_tensor_file(input);
      ensure_tuned(cfg, dir, in, out);
      const Network net = build_network(cfg, dir, in.shape());
      ComputeOptions opt;
      opt.mode = mode_flag(mode);
      std::vector<LayerTiming> timings;
      opt.timings = &timings;
      const Tensor result = compute(net, in, opt);

      if (*run) {
        write_tensor_file(output, result);
        std::int64_t total = 0;
        for (const LayerTiming& t : timings) {
          const std::int64_t ns = t.compute_ns + (include_io ? t.load_ns : 0);
          total += ns;
          err << "layer=" << t.name << " kind=" << to_string(t.kind) << " ms=" << ms(ns) << "\n";
        }
        err << "total_ms=" << ms(static_cast<double>(total)) << "\n";
        const Shape4 s = result.shape();
        out << "mode=" << to_string(net.exec_mode(opt).mode) << "\n"
            << "output_shape=" << s.n << "," << s.c << "," << s.h << "," << s.w << "\n";
        return kExitOk;
      }

      const Tensor ref = read_tensor_file(reference);
      const double err_sq = mse(result, ref);
      const bool pass = err_sq <= threshold;
      out << std::setprecision(17) << "mse=" << err_sq << "\n"
          << "threshold=" << threshold << "\n"
          << "result=" << (pass ? "pass" : "fail") << "\n";
      return pass ? kExitOk : kExitVerifyFailed;
    }

    if (*bench) {
      const Tensor in = random_tensor(netfile_input(cfg, batch), seed);
      ensure_tuned(cfg, dir, in, out);
      const Network net = build_network(cfg, dir, in.shape());
      ComputeOptions seq_opt;
      seq_opt.mode = ExecutionMode::sequential;
      const BenchStats seq = benchmark_network(net, in, reps, seq_opt, include_io);
      const ExecutionMode against = mode_flag(mode).value_or(ExecutionMode::parallel);
      BenchStats other = seq;
      if (against == ExecutionMode::parallel) {
        ComputeOptions par_opt;
        par_opt.mode = ExecutionMode::parallel;
        other = benchmark_network(net, in, reps, par_opt, include_io);
      }
      out << "batch=" << batch << "\n"
          << "reps=" << reps << "\n"
          << "threads=" << default_pool().concurrency() << "\n"
          << "profile=" << to_string(net.profile()) << "\n"
          << "profile_tuned=" << (net.profile_tuned() ? 1 : 0) << "\n"
          << "sequential_ms_per_image=" << ms(seq.mean_per_image_ns()) << "\n"
          << to_string(against) << "_ms_per_image=" << ms(other.mean_per_image_ns()) << "\n"
          << std::setprecision(4) << "speedup="
          << (other.mean_ns() > 0 ? seq.mean_ns() / other.mean_ns() : 1.0) << "\n";
      return kExitOk;
    }

    if (*tune_cmd) {
      const auto profile_path = dir / kProfileFileName;
      if (!cfg.auto_tuning && !force) {
        err << "error: auto_tuning is off in the NetFile; pass --force to tune anyway\n";
        return kExitError;
      }
      if (std::filesystem::exists(profile_path) && !force) {
        const LoadedProfile p = load_profile(profile_path);
        out << "already tuned\n"
            << "profile=" << to_string(p.profile) << "\n"
            << "host=" << p.host << "\n";
        return kExitOk;
      }
      const Tensor sample = random_tensor(netfile_input(cfg, tune_batch), seed);
      const TuneReport report = tune_and_save(cfg, dir, sample, tune_reps);
      for (const CandidateTiming& t : report.timings) {
        out << "candidate rows_per_item=" << t.profile.rows_per_item
            << " vec_width=" << t.profile.vec_width
            << " fc_outputs_per_item=" << t.profile.fc_outputs_per_item
            << " median_ns=" << t.median_ns << "\n";
      }
      out << "chosen=" << to_string(report.chosen) << "\n"
          << "host=" << report.host << "\n"
          << "profile_file=" << profile_path.string() << "\n";
      return kExitOk;
    }

    if (*synth) {
      const WeightShapes shapes = write_random_model(cfg, dir, seed);
      for (const auto& [name, s] : shapes) out << "wrote layer=" << name << " shape=" << s.str() << "\n";
      if (!input.empty()) {
        write_tensor_file(input, random_tensor(netfile_input(cfg, input_batch), seed + 1000));
        out << "wrote input=" << input << "\n";
      }
      return kExitOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace cnnd::cli
