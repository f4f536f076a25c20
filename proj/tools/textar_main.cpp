#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "textar/checkpoint.hpp"
#include "textar/config.hpp"
#include "textar/dataset.hpp"
#include "textar/evaluation.hpp"
#include "textar/log.hpp"
#include "textar/model.hpp"
#include "textar/nn.hpp"
#include "textar/synthdoc.hpp"
#include "textar/training.hpp"
#include "textar/version.hpp"

namespace fs = std::filesystem;
using namespace textar;
using nlohmann::json;

// exit codes: 0 success, 1 bad usage/config, 2 runtime failure
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;  // -1 = keep the config value
  int threads = 0;         // 0 = keep the config value
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON run config (defaults apply when omitted)");
  cmd->add_option("--set", o.overrides, "override a config value, e.g. --set model.d_model=64")
      ->take_all();
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_option("--threads", o.threads, "worker threads (default 1)");
}

config::RunConfig resolve(const CommonOpts& o) {
  auto merged = config::resolve_run_json(o.config_path, o.overrides);
  auto rc = config::parse_run_config(merged);
  if (o.seed >= 0) {
    rc.seed = static_cast<std::uint64_t>(o.seed);
    rc.synth.seed = rc.seed;
    rc.train.seed = rc.seed;
  }
  if (o.threads > 0) rc.threads = o.threads;
  return rc;
}

// Reads the standard dataset layout and prepares it for inference/training.
data::Dataset load_dataset(const std::string& root, const config::RunConfig& rc) {
  const fs::path ann = fs::path(root) / "annotations.jsonl";
  data::Dataset ds = data::read_annotations_jsonl(ann.string());
  ds.crop_h = rc.model.crop_h;
  ds.crop_w = rc.model.crop_w;
  const fs::path win = fs::path(root) / "windows.jsonl";
  if (fs::exists(win)) {
    data::read_windows_jsonl(win.string(), ds);
    TEXTAR_LOG_DEBUG("loaded %zu windows from %s", ds.total_windows(), win.string().c_str());
  } else {
    data::build_windows(ds, rc.model.S, rc.geometry_k, rc.geometry_m, rc.seed);
    TEXTAR_LOG_DEBUG("built %zu windows (S=%d)", ds.total_windows(), rc.model.S);
  }
  data::load_crops(ds, root);
  return ds;
}

std::unique_ptr<model::Model> load_model(const std::string& ckpt_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto mc = model::ModelConfig::from_json(ckpt.header.at("model"));
  auto m = std::make_unique<model::Model>(mc, 0);
  const auto loaded = m->load_matching(ckpt.tensors);
  if (loaded.size() != m->params().size())
    throw std::runtime_error("checkpoint " + ckpt_path + " does not cover every parameter (" +
                             std::to_string(loaded.size()) + "/" +
                             std::to_string(m->params().size()) + ")");
  return m;
}

void save_model(const std::string& path, const model::Model& m, const char* stage) {
  const json header = {{"format", "textar-checkpoint"},
                       {"tool_version", kVersion},
                       {"stage", stage},
                       {"model", m.config().to_json()}};
  save_checkpoint(path, header, m.params());
}

int cmd_synth(const CommonOpts& opts, const std::string& out_dir, int docs_flag) {
  auto rc = resolve(opts);
  if (docs_flag > 0) rc.synth_docs = docs_flag;
  const int n = rc.synth_docs;
  std::vector<synth::GeneratedDocument> docs(static_cast<std::size_t>(n));

  // documents are independent streams, so they parallelize without changing
  // the result: doc i always renders from derive_seed(seed, i)
  const int workers = std::min(rc.threads, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i)
      docs[static_cast<std::size_t>(i)] = synth::generate_document(
          rc.synth, Rng::derive_seed(rc.seed, static_cast<std::uint64_t>(i)));
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int i = w; i < n; i += workers)
          docs[static_cast<std::size_t>(i)] = synth::generate_document(
              rc.synth, Rng::derive_seed(rc.seed, static_cast<std::uint64_t>(i)));
      });
    }
    for (auto& t : pool) t.join();
  }

  std::vector<Image> pages;
  pages.reserve(docs.size());
  for (auto& d : docs) pages.push_back(std::move(d.page));
  auto ds = data::from_generated(std::move(docs), rc.model.crop_h, rc.model.crop_w);
  data::write_dataset(out_dir, ds, pages);
  std::printf("wrote %d documents (%zu words) to %s\n", n, ds.total_words(), out_dir.c_str());
  return kExitOk;
}

int cmd_select_windows(const CommonOpts& opts, const std::string& input, std::string output,
                       int S_flag, double k_flag, double m_flag) {
  const auto rc = resolve(opts);
  const int S = S_flag > 0 ? S_flag : rc.model.S;
  const double k = k_flag > 0 ? k_flag : rc.geometry_k;
  const double m = m_flag > 0 ? m_flag : rc.geometry_m;
  data::Dataset ds = data::read_annotations_jsonl(input);
  data::build_windows(ds, S, k, m, rc.seed);
  if (output.empty()) output = (fs::path(input).parent_path() / "windows.jsonl").string();
  data::write_windows_jsonl(output, ds);
  std::printf("wrote %zu windows (S=%d, k=%g, m=%g) to %s\n", ds.total_windows(), S, k, m,
              output.c_str());
  return kExitOk;
}

int cmd_train(const CommonOpts& opts, const std::string& data_dir, const std::string& out_ckpt,
              const std::string& stage_flag, const std::string& init_ckpt,
              const std::string& metrics_csv) {
  auto rc = resolve(opts);
  if (!stage_flag.empty()) {
    if (stage_flag == "1")
      rc.train.stage = train::Stage::stage1;
    else if (stage_flag == "2")
      rc.train.stage = train::Stage::stage2;
    else if (stage_flag == "e2e")
      rc.train.stage = train::Stage::end_to_end;
    else
      rc.train.stage = train::stage_from_name(stage_flag);
  }
  const auto ds = load_dataset(data_dir, rc);

  std::unique_ptr<model::Model> m;
  train::TrainResult result;
  switch (rc.train.stage) {
    case train::Stage::stage1:
      m = train::train_stage1(rc.model, ds, rc.train, &result);
      break;
    case train::Stage::stage2: {
      if (init_ckpt.empty())
        throw config::ConfigError("train: stage 2 needs --init-from with the stage-1 checkpoint");
      const auto ckpt = load_checkpoint(init_ckpt);
      m = train::train_stage2(ckpt.tensors, rc.model, ds, rc.train, &result);
      break;
    }
    case train::Stage::end_to_end: {
      m = std::make_unique<model::Model>(rc.model, Rng::derive_seed(rc.seed, 100));
      result = train::train_loop(*m, ds, rc.train);
      break;
    }
  }

  save_model(out_ckpt, *m, train::stage_name(rc.train.stage));
  if (!metrics_csv.empty()) train::write_metrics_csv(metrics_csv, result.rows);
  std::printf("trained %s for %ld steps, final loss %.6f -> %s\n",
              train::stage_name(rc.train.stage), result.steps, result.final_loss,
              out_ckpt.c_str());
  return kExitOk;
}

int cmd_eval(const CommonOpts& opts, const std::string& data_dir, const std::string& ckpt_path,
             const std::string& report_path, int S_flag) {
  auto rc = resolve(opts);
  const auto m = load_model(ckpt_path);
  rc.model = m->config();  // the checkpoint's geometry wins
  if (S_flag > 0) rc.model.S = S_flag;
  const auto ds = load_dataset(data_dir, rc);
  const auto report = eval::evaluate_run(*m, ds, rc.eval_batch_windows);
  const json j = eval::report_json(report);
  if (!report_path.empty()) {
    std::ofstream os(report_path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for write: " + report_path);
    os << j.dump(2) << "\n";
  }
  std::printf("%s\n", j.dump(2).c_str());
  return kExitOk;
}

int cmd_predict(const CommonOpts& opts, const std::string& annotations,
                const std::string& ckpt_path, const std::string& out_path) {
  auto rc = resolve(opts);
  const auto m = load_model(ckpt_path);
  rc.model = m->config();
  const std::string root = fs::path(annotations).parent_path().string();
  const auto ds = load_dataset(root.empty() ? "." : root, rc);

  const auto records = eval::collect_logits(*m, ds, rc.eval_batch_windows);
  std::map<eval::WordKey, std::vector<eval::LogitRecord>> by_word;
  for (const auto& r : records) by_word[{r.doc, r.word}].push_back(r);

  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for write: " + out_path);
  for (const auto& [key, recs] : by_word) {
    const auto pred = eval::cavg(recs);
    const json line = {{"doc", ds.docs[static_cast<std::size_t>(key.first)].image_path},
                       {"word", key.second},
                       {"t1", pred.t1},
                       {"t2", pred.t2},
                       {"windows", recs.size()}};
    os << line.dump() << "\n";
  }
  std::printf("wrote %zu predictions to %s\n", by_word.size(), out_path.c_str());
  return kExitOk;
}

int cmd_gradcheck(const CommonOpts& opts, double epsilon, double tolerance, int coords) {
  // the toy preset is the reference config for checking; --set still applies
  config::RunConfig rc;
  if (opts.config_path.empty() || opts.config_path == "toy") {
    CommonOpts o = opts;
    o.config_path.clear();
    rc = resolve(o);
    rc.model = model::ModelConfig::toy();
  } else {
    rc = resolve(opts);
  }
  auto mc = rc.model;
  mc.dropout = 0.0;  // finite differences need a deterministic loss
  model::Model m(mc, Rng::derive_seed(rc.seed, 100));

  Rng rng(Rng::derive_seed(rc.seed, 1));
  model::WindowBatch batch;
  const int B = 2, S = mc.S;
  batch.crops = Tensor::zeros({B, S, 1, mc.crop_h, mc.crop_w});
  for (double& x : batch.crops.v) x = rng.uniform();
  batch.positions.assign(B, std::vector<NormalizedPosition>(S));
  batch.mask.assign(B, std::vector<bool>(S, true));
  batch.labels_t1.assign(B, std::vector<int>(S));
  batch.labels_t2.assign(B, std::vector<int>(S));
  for (int b = 0; b < B; ++b) {
    for (int s = 0; s < S; ++s) {
      batch.positions[b][s] = {rng.uniform(), rng.uniform()};
      batch.labels_t1[b][s] = static_cast<int>(rng.uniform_int(kNumClasses));
      batch.labels_t2[b][s] = static_cast<int>(rng.uniform_int(kNumClasses));
    }
  }
  batch.mask[1][S - 1] = false;  // exercise the padding path too

  train::TrainConfig tc;
  const auto loss_fn = [&]() {
    m.params().zero_grads();
    model::ForwardCache cache;
    const auto out = m.forward(batch, true, nullptr, &cache);
    model::ModelOutput grads;
    const double loss = train::multitask_loss(out, batch, m.config(), tc, &grads);
    m.backward(cache, grads);
    return loss;
  };

  Rng check_rng(Rng::derive_seed(rc.seed, 2));
  const auto res = nn::finite_difference_check(m.params(), loss_fn, epsilon, check_rng, coords);
  std::printf("gradcheck: max rel err %.3e over %zu coords (worst: %s) -> %s\n",
              res.max_rel_error, res.coords_checked, res.worst_param.c_str(),
              res.passed(tolerance) ? "pass" : "FAIL");
  return res.passed(tolerance) ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"textual attribute recognition pipeline"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic dataset");
  std::string synth_out;
  int synth_docs = 0;
  synth_cmd->add_option("--out-dir,--out", synth_out, "output dataset directory")->required();
  synth_cmd->add_option("--docs", synth_docs, "number of documents (overrides config)");
  add_common(synth_cmd, opts);

  auto* win_cmd = app.add_subcommand("select-windows", "build context windows for a dataset");
  std::string win_input, win_output;
  int win_S = 0;
  double win_k = 0, win_m = 0;
  win_cmd->add_option("--input", win_input, "annotations JSONL")->required();
  win_cmd->add_option("--output", win_output, "windows JSONL (default: sibling windows.jsonl)");
  win_cmd->add_option("--S", win_S, "window size (overrides config)");
  win_cmd->add_option("--k", win_k, "horizontal metric weight");
  win_cmd->add_option("--m", win_m, "vertical metric weight");
  add_common(win_cmd, opts);

  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string train_data, train_out, train_stage, train_init, train_metrics;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "output checkpoint path")->required();
  train_cmd->add_option("--stage", train_stage, "1, 2, or e2e (overrides config)");
  train_cmd->add_option("--init-from,--init", train_init, "stage-1 checkpoint (stage 2 only)");
  train_cmd->add_option("--metrics", train_metrics, "per-epoch metrics CSV path");
  add_common(train_cmd, opts);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_data, eval_ckpt, eval_report;
  int eval_S = 0;
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--ckpt,--model", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--S", eval_S, "window size for evaluation windows");
  eval_cmd->add_option("--report", eval_report, "write the JSON report here too");
  add_common(eval_cmd, opts);

  auto* pred_cmd = app.add_subcommand("predict", "per-word predictions as JSONL");
  std::string pred_ann, pred_ckpt, pred_out;
  pred_cmd->add_option("--image-annotations,--data", pred_ann, "annotations JSONL")->required();
  pred_cmd->add_option("--ckpt,--model", pred_ckpt, "checkpoint path")->required();
  pred_cmd->add_option("--out", pred_out, "output JSONL path")->required();
  add_common(pred_cmd, opts);

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  double gc_eps = 1e-4, gc_tol = 1e-3;
  int gc_coords = 4;
  grad_cmd->add_option("--epsilon", gc_eps, "central-difference step");
  grad_cmd->add_option("--tolerance", gc_tol, "max relative error allowed");
  grad_cmd->add_option("--coords", gc_coords, "coordinates sampled per tensor");
  add_common(grad_cmd, opts);

  auto* version_cmd = app.add_subcommand("version", "print the tool version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (version_cmd->parsed()) {
      std::printf("textar %s\n", kVersion);
      return kExitOk;
    }
    if (synth_cmd->parsed()) return cmd_synth(opts, synth_out, synth_docs);
    if (win_cmd->parsed())
      return cmd_select_windows(opts, win_input, win_output, win_S, win_k, win_m);
    if (train_cmd->parsed())
      return cmd_train(opts, train_data, train_out, train_stage, train_init, train_metrics);
    if (eval_cmd->parsed()) return cmd_eval(opts, eval_data, eval_ckpt, eval_report, eval_S);
    if (pred_cmd->parsed()) return cmd_predict(opts, pred_ann, pred_ckpt, pred_out);
    if (grad_cmd->parsed()) return cmd_gradcheck(opts, gc_eps, gc_tol, gc_coords);
  } catch (const config::ConfigError& e) {
    TEXTAR_LOG_ERROR("%s", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    TEXTAR_LOG_ERROR("%s", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    TEXTAR_LOG_ERROR("%s", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
