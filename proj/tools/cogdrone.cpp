// cogdrone: task banks, datasets, scored runs, replay and policy serving.
//
// Exit codes: 0 success, 1 policy failure during a scored run (or dataset
// violations), 2 configuration error.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cogdrone/cogdrone.hpp"

namespace cd = cogdrone;

namespace {

constexpr int kOk = 0;
constexpr int kPolicyFailure = 1;
constexpr int kConfigError = 2;

struct BankInput {
  cd::TaskBank bank;
  cd::LabelAtlas atlas;
};

BankInput load_bank(const std::string& path) {
  BankInput in;
  in.bank = path.empty() ? cd::sample_task_bank() : cd::load_task_bank(path);
  if (in.bank.atlas_dir) in.atlas = cd::LabelAtlas::from_directory(*in.bank.atlas_dir);
  return in;
}

std::string remote_address(const std::string& arg) {
  // "remote" alone uses $COGDRONE_POLICY_ADDR
  if (arg == "remote") return "";
  return arg.substr(std::string("remote:").size());
}

bool is_remote(const std::string& arg) { return arg == "remote" || arg.starts_with("remote:"); }

cd::CommandFrame parse_frame(const std::string& s) { return cd::command_frame_from_string(s); }

int cmd_gen_tasks(const std::string& out) {
  const auto text = cd::canonical(cd::task_bank_json(cd::sample_task_bank())) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    cd::write_text_file(out, text);
    std::cerr << "wrote " << out << "\n";
  }
  return kOk;
}

struct DatasetArgs {
  std::string bank;
  std::size_t per_category = 10;
  std::uint64_t seed = 0;
  std::string out;
  bool no_frames = false;
  double split = 0.9;
  bool force = false;
};

int cmd_gen_dataset(const DatasetArgs& a) {
  const auto in = load_bank(a.bank);
  cd::DatasetConfig cfg;
  cfg.episodes_per_category = a.per_category;
  cfg.seed = a.seed;
  cfg.frames = !a.no_frames;
  cfg.split_fraction = a.split;
  cfg.force = a.force;
  const auto m = cd::generate_dataset(in.bank, cfg, a.out, in.atlas);
  std::cout << "episodes: " << m.total() << " (train " << m.train.size() << ", test " << m.test.size() << ")\n";
  std::cout << "tree hash: " << cd::tree_hash(a.out) << "\n";
  return kOk;
}

struct BenchArgs {
  std::string bank;
  std::size_t per_category = 30;
  std::string policy = "oracle";
  std::string reasoner = "none";
  std::uint64_t seed = 0;
  std::string out;
  bool frames = false;
  bool lenient = false;
  int timeout_ms = 1000;
  std::string command_frame = "body_yaw";
  std::string mode = "lockstep";
};

int cmd_run_bench(const BenchArgs& a) {
  const auto in = load_bank(a.bank);
  cd::BenchConfig cfg;
  cfg.stages_per_category = a.per_category;
  cfg.seed = a.seed;
  cfg.world.render_frames = a.frames;
  cfg.strict = !a.lenient;
  cfg.world.command_frame = parse_frame(a.command_frame);
  if (a.mode == "free_running") {
    cfg.rates.mode = cd::ExecutionMode::free_running;
  } else if (a.mode != "lockstep") {
    throw cd::ValidationError("unknown mode '" + a.mode + "'");
  }

  cd::RemoteOptions ropts;
  ropts.timeout = cd::Millis(a.timeout_ms);
  ropts.send_frames = a.frames;
  ropts.limits = cfg.world.limits;

  std::optional<cd::RemotePolicy> remote_policy;
  std::optional<cd::RemotePolicy> remote_reasoner;
  std::unique_ptr<cd::PolicySource> source;
  if (a.policy == "oracle") {
    source = std::make_unique<cd::OraclePolicySource>(cfg.world, cfg.planner);
  } else if (a.policy == "random") {
    source = std::make_unique<cd::SharedPolicySource>(
        "random", cd::random_gate_policy(cd::random_policy_seed(a.seed), cfg.world, cfg.planner));
  } else if (a.policy == "zero") {
    source = std::make_unique<cd::SharedPolicySource>("zero", std::make_unique<cd::ZeroController>());
  } else if (a.policy == "directive") {
    source = std::make_unique<cd::SharedPolicySource>("directive",
                                                      std::make_unique<cd::DirectiveFollower>(cfg.world, cfg.planner));
  } else if (is_remote(a.policy)) {
    auto opts = ropts;
    opts.reasoner = a.reasoner == a.policy;
    try {
      remote_policy = cd::connect_remote_policy(remote_address(a.policy), opts);
    } catch (const cd::TransportError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kPolicyFailure;
    }
    source = std::make_unique<cd::SharedPolicySource>(a.policy, *remote_policy->controller);
  } else {
    throw cd::ValidationError("unknown policy '" + a.policy + "'");
  }

  std::unique_ptr<cd::Reasoner> local_reasoner;
  cd::Reasoner* reasoner = nullptr;
  if (a.reasoner == "identity") {
    local_reasoner = std::make_unique<cd::IdentityReasoner>();
    reasoner = local_reasoner.get();
  } else if (is_remote(a.reasoner)) {
    if (remote_policy && remote_policy->reasoner) {
      reasoner = remote_policy->reasoner.get();
    } else {
      auto opts = ropts;
      opts.controller = false;
      opts.reasoner = true;
      try {
        remote_reasoner = cd::connect_remote_policy(remote_address(a.reasoner), opts);
      } catch (const cd::TransportError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kPolicyFailure;
      }
      reasoner = remote_reasoner->reasoner.get();
    }
  } else if (a.reasoner != "none") {
    throw cd::ValidationError("unknown reasoner '" + a.reasoner + "'");
  }

  int code = kOk;
  cd::BenchReport report;
  try {
    report = cd::run_benchmark(in.bank, cfg, *source, reasoner, a.reasoner, in.atlas);
  } catch (const cd::BenchAborted& e) {
    std::cerr << "error: run aborted: " << e.what() << "\n";
    report = e.report();
    code = kPolicyFailure;
  }
  if (remote_policy)
    for (const auto& w : remote_policy->session->warnings()) std::cerr << "warning: " << w << "\n";
  if (!a.out.empty()) cd::emit_report(report, a.out);
  std::cout << cd::report_markdown(report);
  return code;
}

int cmd_replay(const std::string& dir, const std::string& out, bool frames) {
  namespace fs = std::filesystem;
  std::vector<fs::path> episodes;
  if (fs::exists(fs::path(dir) / "episode.json")) {
    episodes.push_back(dir);
  } else if (fs::is_directory(fs::path(dir) / "episodes")) {
    for (const auto& e : fs::directory_iterator(fs::path(dir) / "episodes"))
      if (e.is_directory()) episodes.push_back(e.path());
    std::sort(episodes.begin(), episodes.end());
  } else {
    throw cd::IoError("not an episode or dataset directory: " + dir);
  }
  bool ok = true;
  for (const auto& ep : episodes) {
    std::optional<fs::path> target;
    if (!out.empty()) target = episodes.size() == 1 ? fs::path(out) : fs::path(out) / ep.filename();
    const auto r = cd::replay_episode(ep, target, frames);
    std::cout << ep.filename().string() << ": " << r.steps << " steps, " << r.frames_compared << " frames compared, "
              << r.mismatches.size() << " mismatches\n";
    for (const auto& m : r.mismatches)
      std::cout << "  step " << m.step << ": stored " << m.stored_hash << " rendered " << m.rendered_hash << "\n";
    for (const auto& e : r.errors) std::cout << "  " << e << "\n";
    if (out.empty() && episodes.size() == 1 && !frames) std::cout << r.trajectory;
    ok = ok && r.ok();
  }
  return ok ? kOk : kPolicyFailure;
}

int cmd_verify(const std::string& dir) {
  const auto r = cd::verify_dataset(dir);
  for (const auto& v : r.violations) std::cout << v << "\n";
  std::cout << r.episodes_checked << " episodes checked, " << r.violations.size() << " violations\n";
  return r.exit_code();
}

struct ServeArgs {
  std::string policy = "random";
  std::string reasoner = "none";
  std::uint64_t seed = 0;
  std::string listen;
  bool stdio = false;
  std::size_t sessions = 0;
  std::vector<std::string> script;  // "instruction=directive" pairs
};

cd::PolicyFactory make_factory(const ServeArgs& a) {
  if (a.policy != "random" && a.policy != "zero" && a.policy != "directive" && a.policy != "none")
    throw cd::ValidationError("serve: unknown policy '" + a.policy + "'");
  if (a.reasoner != "none" && a.reasoner != "identity" && a.reasoner != "scripted")
    throw cd::ValidationError("serve: unknown reasoner '" + a.reasoner + "'");
  std::vector<std::pair<std::string, std::string>> table;
  for (const auto& s : a.script) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw cd::ValidationError("serve: --script expects INSTRUCTION=DIRECTIVE");
    table.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return [a, table] {
    cd::PolicyHandlers h;
    if (a.policy == "random") h.controller = cd::random_gate_policy(cd::random_policy_seed(a.seed));
    if (a.policy == "zero") h.controller = std::make_unique<cd::ZeroController>();
    if (a.policy == "directive") h.controller = std::make_unique<cd::DirectiveFollower>();
    if (a.reasoner == "identity") h.reasoner = std::make_unique<cd::IdentityReasoner>();
    if (a.reasoner == "scripted") h.reasoner = std::make_unique<cd::ScriptedReasoner>(table);
    return h;
  };
}

int cmd_serve(const ServeArgs& a) {
  const auto factory = make_factory(a);
  if (a.stdio) {
    auto stream = cd::stdio_stream();
    auto handlers = factory();
    const auto stats = cd::serve_policy_session(*stream, handlers);
    if (!stats.error.empty()) std::cerr << "session ended: " << stats.error << "\n";
    return stats.clean_exit ? kOk : kPolicyFailure;
  }
  if (a.listen.empty()) throw cd::ValidationError("serve: need --listen ADDR or --stdio");
  cd::Listener listener(a.listen);
  std::cerr << "listening on " << a.listen;
  if (listener.port() > 0) std::cerr << " (port " << listener.port() << ")";
  std::cerr << std::endl;
  const auto stats = cd::serve_policy_endpoint(listener, factory, a.sessions);
  for (const auto& s : stats)
    if (!s.error.empty()) std::cerr << "session ended: " << s.error << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cognitive gate-track benchmark: task banks, datasets, scored runs"};
  app.require_subcommand(1);

  std::string tasks_out;
  auto* gen_tasks = app.add_subcommand("gen-tasks", "Write the bundled sample task bank");
  gen_tasks->add_option("--out", tasks_out, "Output file (default stdout)");

  DatasetArgs ds;
  auto* gen_dataset = app.add_subcommand("gen-dataset", "Generate an oracle trajectory dataset");
  gen_dataset->add_option("--bank", ds.bank, "Task bank JSON (default: bundled sample bank)");
  gen_dataset->add_option("--per-category", ds.per_category, "Episodes per category")->check(CLI::PositiveNumber);
  gen_dataset->add_option("--seed", ds.seed, "Generator seed");
  gen_dataset->add_option("--out", ds.out, "Output directory")->required();
  gen_dataset->add_flag("--no-frames", ds.no_frames, "Skip frame files");
  gen_dataset->add_option("--split", ds.split, "Train fraction")->check(CLI::Range(0.0, 1.0));
  gen_dataset->add_flag("--force", ds.force, "Replace a non-empty output directory");

  BenchArgs bench;
  auto* run_bench = app.add_subcommand("run-bench", "Score a policy on a generated track");
  run_bench->add_option("--bank", bench.bank, "Task bank JSON (default: bundled sample bank)");
  run_bench->add_option("--per-category", bench.per_category, "Stages per category")->check(CLI::PositiveNumber);
  run_bench->add_option("--policy", bench.policy, "oracle | random | zero | directive | remote[:ADDR]");
  run_bench->add_option("--reasoner", bench.reasoner, "none | identity | remote[:ADDR]");
  run_bench->add_option("--seed", bench.seed, "Track seed");
  run_bench->add_option("--out", bench.out, "Report directory");
  run_bench->add_flag("--frames", bench.frames, "Render FPV frames every tick (sent to remote peers)");
  run_bench->add_flag("--lenient", bench.lenient, "Leave harness-error stages out of the score denominator");
  run_bench->add_option("--timeout-ms", bench.timeout_ms, "Remote reply deadline")->check(CLI::PositiveNumber);
  run_bench->add_option("--command-frame", bench.command_frame, "body_yaw | world");
  run_bench->add_option("--mode", bench.mode, "lockstep | free_running");

  std::string replay_dir;
  std::string replay_out;
  bool replay_frames = false;
  auto* replay = app.add_subcommand("replay", "Re-render an episode (or every episode of a dataset)");
  replay->add_option("dir", replay_dir, "Episode or dataset directory")->required();
  replay->add_option("--out", replay_out, "Write trajectory.txt (and frames) here");
  replay->add_flag("--frames", replay_frames, "Write re-rendered frames");

  std::string verify_dir;
  auto* verify = app.add_subcommand("verify", "Check a dataset directory");
  verify->add_option("dir", verify_dir, "Dataset directory")->required();

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Serve a built-in policy over the wire protocol");
  serve_cmd->add_option("--policy", serve.policy, "random | zero | directive | none");
  serve_cmd->add_option("--reasoner", serve.reasoner, "none | identity | scripted");
  serve_cmd->add_option("--script", serve.script, "INSTRUCTION=DIRECTIVE rewrite for the scripted reasoner");
  serve_cmd->add_option("--seed", serve.seed, "Benchmark seed the random policy is keyed to");
  serve_cmd->add_option("--listen", serve.listen, "HOST:PORT or unix:PATH");
  serve_cmd->add_flag("--stdio", serve.stdio, "Serve one session on stdin/stdout");
  serve_cmd->add_option("--sessions", serve.sessions, "Exit after N sessions (0 = forever)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen_tasks) return cmd_gen_tasks(tasks_out);
    if (*gen_dataset) return cmd_gen_dataset(ds);
    if (*run_bench) return cmd_run_bench(bench);
    if (*replay) return cmd_replay(replay_dir, replay_out, replay_frames);
    if (*verify) return cmd_verify(verify_dir);
    if (*serve_cmd) return cmd_serve(serve);
  } catch (const cd::TransportError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPolicyFailure;
  } catch (const cd::PlanningError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPolicyFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}
