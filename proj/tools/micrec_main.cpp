#include "micrec/errors.hpp"
#include "micrec/pipeline.hpp"
#include "micrec/selftest.hpp"

#include "CLI11.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace micrec;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kDivergence = 4 };

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_file, "flat key = value config file");
  cmd->add_option("-s,--set", o.overrides, "override a config key (key=value), repeatable");
}

// Builds the run config: file first, then --set overrides, then dedicated flags.
RunConfig build_config(const CommonOptions& o, const std::vector<std::pair<std::string, std::string>>& flags) {
  RunConfig cfg;
  if (!o.config_file.empty()) load_config_file(o.config_file, cfg);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : flags) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

// "20", "5,10,20", "5..100" (step 5) or "5..100/10".
std::vector<int> parse_ns(const std::vector<std::string>& specs) {
  std::vector<int> ns;
  for (const auto& spec : specs) {
    std::size_t start = 0;
    while (start <= spec.size()) {
      auto comma = spec.find(',', start);
      if (comma == std::string::npos) comma = spec.size();
      const std::string item = spec.substr(start, comma - start);
      start = comma + 1;
      if (item.empty()) continue;
      try {
        const auto dots = item.find("..");
        if (dots == std::string::npos) {
          ns.push_back(std::stoi(item));
          continue;
        }
        const auto slash = item.find('/');
        const int lo = std::stoi(item.substr(0, dots));
        const int hi = std::stoi(item.substr(dots + 2, slash == std::string::npos ? std::string::npos : slash - dots - 2));
        const int step = slash == std::string::npos ? 5 : std::stoi(item.substr(slash + 1));
        if (step < 1 || hi < lo) throw ConfigError("bad N range '" + item + "'");
        for (int n = lo; n <= hi; n += step) ns.push_back(n);
      } catch (const std::logic_error&) {
        throw ConfigError("bad N list entry '" + item + "'");
      }
    }
  }
  for (int n : ns)
    if (n < 1) throw ConfigError("N must be at least 1");
  return ns;
}

int run_prepare(const CommonOptions& o, const std::vector<std::pair<std::string, std::string>>& flags) {
  const auto cfg = build_config(o, flags);
  const auto summary = cmd_prepare(cfg);
  std::printf("%-6s %7s %7s %7s %7s %8s %8s %8s %8s %8s\n", "domain", "users", "items", "seen_u", "seen_i",
              "train", "new", "val", "test", "overlap");
  for (const auto& s : summary.stats)
    std::printf("%-6s %7d %7d %7d %7d %8zu %8zu %8zu %8zu %8zu\n", to_string(s.tag), s.users, s.items,
                s.seen_users, s.seen_items, s.train, s.new_edges, s.val, s.test, s.overlap);
  std::printf("wrote %s\n", summary.directory.c_str());
  return kOk;
}

int run_train(const CommonOptions& o, const std::vector<std::pair<std::string, std::string>>& flags,
              const std::string& state, const std::string& resume) {
  const auto cfg = build_config(o, flags);
  try {
    const auto out = cmd_train(cfg, state, resume);
    std::printf("best epoch %d; wrote %s and %s\n", out.model.best_epoch, out.checkpoint_path.c_str(),
                out.history_path.c_str());
  } catch (const DivergenceError& e) {
    const auto dump_path = (fs::path(cfg.out) / "divergence.txt").string();
    std::ofstream dump(dump_path);
    dump << e.what() << '\n' << e.dump();
    spdlog::error("{}; offending batch written to {}", e.what(), dump_path);
    return kDivergence;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("micrec"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"micrec: inductive multimodal cross-domain recommendation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log every training epoch");

  // flags shared by prepare and train map onto config keys
  std::vector<std::pair<std::string, std::string>> flags;
  auto key_option = [&](CLI::App* cmd, const std::string& name, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        name, [&flags, key](const std::string& v) { flags.emplace_back(key, v); }, help);
  };
  auto key_flag = [&](CLI::App* cmd, const std::string& name, const std::string& key, const std::string& help) {
    cmd->add_flag_callback(name, [&flags, key] { flags.emplace_back(key, "true"); }, help);
  };

  CommonOptions prep_opts, train_opts;
  auto* prepare = app.add_subcommand("prepare", "filter raw data, split and write artifacts");
  add_common(prepare, prep_opts);
  key_option(prepare, "--data-a", "data_a", "raw records of domain A");
  key_option(prepare, "--data-b", "data_b", "raw records of domain B");
  key_option(prepare, "--overlap", "overlap", "overlapping user keys");
  key_option(prepare, "-o,--out", "out", "output directory");
  key_option(prepare, "--seed", "seed", "split seed");

  std::string state_path, resume_path;
  auto* train = app.add_subcommand("train", "train on prepared data");
  add_common(train, train_opts);
  key_option(train, "-o,--out", "out", "prepared data directory (outputs are written there)");
  key_option(train, "--feat-a-text", "feat_a_text", "text features of domain A items");
  key_option(train, "--feat-a-visual", "feat_a_visual", "visual features of domain A items");
  key_option(train, "--feat-b-text", "feat_b_text", "text features of domain B items");
  key_option(train, "--feat-b-visual", "feat_b_visual", "visual features of domain B items");
  key_option(train, "--seed", "seed", "training seed");
  key_option(train, "--epochs", "epochs", "maximum epochs");
  key_flag(train, "--no-mm", "no_mm", "disable modality-based aggregation");
  key_flag(train, "--no-cd", "no_cd", "disable the cross-domain contrastive loss");
  key_flag(train, "--no-txt", "no_txt", "similarity from visual features only");
  key_flag(train, "--no-vis", "no_vis", "similarity from text features only");
  train->add_option("--state", state_path, "write resumable trainer state here after every epoch");
  train->add_option("--resume", resume_path, "continue from a trainer state file");

  std::string ckpt, data_dir, report_out;
  std::vector<std::string> n_specs{"20"};
  std::vector<std::string> slice_specs{"all"};
  bool table = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  eval->add_option("checkpoint", ckpt, "model checkpoint")->required();
  eval->add_option("-d,--data", data_dir, "prepared data directory (default: the checkpoint's directory)");
  eval->add_option("-n,--n", n_specs, "cut-offs: 20, 5,10,20 or 5..100[/step]");
  eval->add_option("--slice", slice_specs, "all or low:<q>, repeatable");
  eval->add_option("-o,--out", report_out, "report file (default: eval.txt next to the checkpoint)");
  eval->add_flag("--table", table, "print an aligned table instead of lines");

  std::string rec_ckpt, rec_data, rec_domain = "A", rec_user, rec_out;
  int top_n = 10;
  auto* recommend = app.add_subcommand("recommend", "top-N items for one user");
  recommend->add_option("checkpoint", rec_ckpt, "model checkpoint")->required();
  recommend->add_option("-u,--user", rec_user, "user key")->required();
  recommend->add_option("--domain", rec_domain, "A or B");
  recommend->add_option("-k,--top", top_n, "number of items");
  recommend->add_option("-d,--data", rec_data, "prepared data directory (default: the checkpoint's directory)");
  recommend->add_option("-o,--out", rec_out, "also write the list and a manifest here");

  auto* selftest = app.add_subcommand("selftest", "run the built-in invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*prepare) return run_prepare(prep_opts, flags);
    if (*train) return run_train(train_opts, flags, state_path, resume_path);
    if (*eval) {
      const auto ns = parse_ns(n_specs);
      std::vector<Slice> slices;
      for (const auto& s : slice_specs) slices.push_back(Slice::parse(s));
      const auto report = cmd_eval(ckpt, ns, slices, data_dir);
      if (table)
        report.write_table(std::cout);
      else
        report.write_lines(std::cout);
      const std::string out_path =
          report_out.empty() ? (fs::path(ckpt).parent_path() / "eval.txt").string() : report_out;
      {
        std::ofstream out(out_path);
        if (!out) throw ConfigError("cannot write " + out_path);
        report.write_lines(out);
      }
      const auto cfg = config_from_checkpoint(load_checkpoint(ckpt));
      write_manifest(out_path + ".manifest.json", "eval", cfg, {{"checkpoint", ckpt}}, {{"report", out_path}});
      return kOk;
    }
    if (*recommend) {
      const auto recs = cmd_recommend(rec_ckpt, parse_domain_tag(rec_domain), rec_user, top_n, rec_data);
      std::ostringstream os;
      char buf[64];
      for (const auto& r : recs) {
        std::snprintf(buf, sizeof buf, "%.17g", r.score);
        os << r.item_key << '\t' << buf << '\n';
      }
      std::cout << os.str();
      if (!rec_out.empty()) {
        {
          std::ofstream out(rec_out);
          if (!out) throw ConfigError("cannot write " + rec_out);
          out << os.str();
        }
        const auto cfg = config_from_checkpoint(load_checkpoint(rec_ckpt));
        write_manifest(rec_out + ".manifest.json", "recommend", cfg, {{"checkpoint", rec_ckpt}},
                       {{"recommendations", rec_out}});
      }
      return kOk;
    }
    if (*selftest) {
      bool ok = true;
      for (const auto& r : run_selftest()) {
        std::printf("%s %s (%s)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        ok = ok && r.passed;
      }
      return ok ? kOk : kFailure;
    }
  } catch (const IncompleteFeaturesError& e) {
    spdlog::error("{}", e.what());
    spdlog::error("feature files must cover every item id in <out>/A.items.tsv and <out>/B.items.tsv; "
                  "run the feature extractor on those id maps");
    return kData;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kConfig;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return kData;
  } catch (const DivergenceError& e) {
    spdlog::error("{}", e.what());
    return kDivergence;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
  return kFailure;
}
