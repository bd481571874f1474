// hico: hierarchical-contrast skeleton representation learning pipeline.
//
// Subcommands: synth, pretrain, embed, probe, retrieve, finetune, dbi, ablate.
// Every run echoes its effective configuration (including seeds) next to its
// outputs so any artifact can be reproduced from its directory.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "hico/config.hpp"

namespace fs = std::filesystem;
using namespace hico;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required = true) {
  cmd->add_option("--config", args.config_path, "configuration file (key = value lines)");
  cmd->add_option("--set", args.sets, "override, repeatable: --set section.key=value");
  auto* out = cmd->add_option("--out", args.out_dir, "output directory");
  if (out_required) out->required();
}

FullConfig build_config(const CommonArgs& args) {
  FullConfig cfg = args.config_path.empty() ? default_config() : parse_config_file(args.config_path);
  apply_overrides(cfg, args.sets);
  return cfg;
}

void write_effective_config(const FullConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "effective.cfg");
  if (!out) throw IoError("cannot write effective config under " + out_dir);
  out << serialize_config(cfg);
}

void write_metrics(const std::map<std::string, double>& metrics, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "metrics.txt");
  char buf[64];
  for (const auto& [key, value] : metrics) {
    std::snprintf(buf, sizeof(buf), "%s = %.6g\n", key.c_str(), value);
    out << buf;
    std::cout << buf;
  }
  if (!out) throw IoError("cannot write metrics under " + out_dir);
}

SkeletonView parse_view(const std::string& v) {
  if (v == "joint") return SkeletonView::joint;
  if (v == "bone") return SkeletonView::bone;
  if (v == "motion") return SkeletonView::motion;
  throw std::invalid_argument("unknown view: " + v + " (expected joint|bone|motion)");
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

// checkpoint + the configuration it was produced with (plus CLI overrides)
struct LoadedCheckpoint {
  Checkpoint ckpt;
  FullConfig cfg;
  MoCoState state;
};

LoadedCheckpoint open_checkpoint(const std::string& path, const std::vector<std::string>& sets) {
  LoadedCheckpoint lc{load_checkpoint(path), default_config(), {}};
  if (!lc.ckpt.config_text.empty()) apply_config_text(lc.cfg, lc.ckpt.config_text);
  apply_overrides(lc.cfg, sets);
  lc.state = state_from_checkpoint(lc.ckpt, lc.cfg.train);
  return lc;
}

int run(int argc, char** argv) {
  CLI::App app{"hierarchical-contrast skeleton representation learning"};
  app.require_subcommand(1);

  CommonArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic benchmark dataset");
  add_common(synth_cmd, synth_args);

  CommonArgs pre_args;
  std::string pre_data, pre_resume;
  auto* pre_cmd = app.add_subcommand("pretrain", "contrastive pre-training");
  add_common(pre_cmd, pre_args);
  pre_cmd->add_option("--data", pre_data, "dataset manifest")->required();
  pre_cmd->add_option("--resume", pre_resume, "resume from a checkpoint");
  std::size_t pre_workers = 0;
  pre_cmd->add_option("--workers", pre_workers, "data-loading/augmentation worker threads");

  CommonArgs emb_args;
  std::string emb_ckpt, emb_data, emb_view = "";
  auto* emb_cmd = app.add_subcommand("embed", "export instance-level embeddings");
  add_common(emb_cmd, emb_args);
  emb_cmd->add_option("--ckpt", emb_ckpt, "checkpoint path")->required();
  emb_cmd->add_option("--data", emb_data, "dataset manifest")->required();
  emb_cmd->add_option("--view", emb_view, "joint|bone|motion (default from config)");

  CommonArgs probe_args;
  std::string probe_ckpt, probe_data, probe_views = "";
  auto* probe_cmd = app.add_subcommand("probe", "linear evaluation on frozen embeddings");
  add_common(probe_cmd, probe_args);
  probe_cmd->add_option("--ckpt", probe_ckpt, "checkpoint path")->required();
  probe_cmd->add_option("--data", probe_data, "dataset manifest")->required();
  probe_cmd->add_option("--views", probe_views, "comma list of views; >1 fuses mean logits");

  CommonArgs ret_args;
  std::string ret_ckpt, ret_data, ret_views = "";
  auto* ret_cmd = app.add_subcommand("retrieve", "1-NN retrieval, test queries vs train gallery");
  add_common(ret_cmd, ret_args);
  ret_cmd->add_option("--ckpt", ret_ckpt, "checkpoint path")->required();
  ret_cmd->add_option("--data", ret_data, "dataset manifest")->required();
  ret_cmd->add_option("--views", ret_views, "comma list of views; >1 fuses mean similarities");

  CommonArgs ft_args;
  std::string ft_ckpt, ft_data, ft_view = "";
  double ft_fraction = -1.0;
  auto* ft_cmd = app.add_subcommand("finetune", "finetune encoder + classifier");
  add_common(ft_cmd, ft_args);
  ft_cmd->add_option("--ckpt", ft_ckpt, "checkpoint path")->required();
  ft_cmd->add_option("--data", ft_data, "dataset manifest")->required();
  ft_cmd->add_option("--view", ft_view, "joint|bone|motion");
  ft_cmd->add_option("--fraction", ft_fraction, "labeled fraction in (0,1]");

  CommonArgs dbi_args;
  std::string dbi_ckpt, dbi_data, dbi_view = "", dbi_split = "test";
  auto* dbi_cmd = app.add_subcommand("dbi", "Davies-Bouldin index of embeddings");
  add_common(dbi_cmd, dbi_args);
  dbi_cmd->add_option("--ckpt", dbi_ckpt, "checkpoint path")->required();
  dbi_cmd->add_option("--data", dbi_data, "dataset manifest")->required();
  dbi_cmd->add_option("--view", dbi_view, "joint|bone|motion");
  dbi_cmd->add_option("--split", dbi_split, "train|test");

  CommonArgs abl_args;
  std::string abl_data, abl_axis, abl_values;
  auto* abl_cmd = app.add_subcommand("ablate", "sweep one axis, one CSV row per value");
  add_common(abl_cmd, abl_args);
  abl_cmd->add_option("--data", abl_data, "dataset manifest")->required();
  abl_cmd->add_option("--axis", abl_axis, "granularity|branches|loss|udm|fusion")->required();
  abl_cmd->add_option("--values", abl_values, "comma-separated values for the axis")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (synth_cmd->parsed()) {
    FullConfig cfg = build_config(synth_args);
    write_effective_config(cfg, synth_args.out_dir);
    DatasetManifest manifest = synth_dataset(synth_spec_from(cfg.data), synth_args.out_dir);
    std::cout << "wrote " << manifest.items.size() << " sequences + manifest.tsv under "
              << synth_args.out_dir << "\n";
    return 0;
  }

  if (pre_cmd->parsed()) {
    FullConfig cfg = build_config(pre_args);
    if (pre_workers > 0) cfg.train.workers = pre_workers;
    write_effective_config(cfg, pre_args.out_dir);
    DatasetManifest manifest = load_manifest(pre_data);
    std::optional<Checkpoint> resume;
    if (!pre_resume.empty()) resume = load_checkpoint(pre_resume);
    std::ofstream csv(fs::path(pre_args.out_dir) / "loss.csv");
    if (!csv) throw IoError("cannot write loss.csv under " + pre_args.out_dir);
    PretrainResult result = pretrain(manifest, cfg.train, serialize_config(cfg), &csv,
                                     resume ? &*resume : nullptr);
    const std::string ckpt_path = (fs::path(pre_args.out_dir) / "checkpoint.hckp").string();
    save_checkpoint(result.checkpoint, ckpt_path);
    std::cout << "trained " << cfg.train.epochs << " epochs, " << result.trace.size()
              << " steps; checkpoint at " << ckpt_path << "\n";
    return 0;
  }

  if (emb_cmd->parsed()) {
    LoadedCheckpoint lc = open_checkpoint(emb_ckpt, emb_args.sets);
    write_effective_config(lc.cfg, emb_args.out_dir);
    DatasetManifest manifest = load_manifest(emb_data);
    const SkeletonView view = parse_view(emb_view.empty() ? lc.cfg.eval_view : emb_view);
    const SkeletonTopology topo = SkeletonTopology::default_for(lc.cfg.train.enc.joints);
    for (const char* split : {"train", "test"}) {
      EmbeddingTable table =
          extract_embeddings(lc.state.model, lc.state.query, manifest, split, view, topo);
      if (table.count() == 0) continue;
      save_embeddings_csv(table, (fs::path(emb_args.out_dir) / (std::string(split) + ".csv")).string());
      save_embeddings_emb1(table, (fs::path(emb_args.out_dir) / (std::string(split) + ".emb")).string());
      std::cout << split << ": " << table.count() << " x " << table.dim << "\n";
    }
    return 0;
  }

  if (probe_cmd->parsed() || ret_cmd->parsed()) {
    const bool probing = probe_cmd->parsed();
    const CommonArgs& args = probing ? probe_args : ret_args;
    LoadedCheckpoint lc = open_checkpoint(probing ? probe_ckpt : ret_ckpt, args.sets);
    write_effective_config(lc.cfg, args.out_dir);
    DatasetManifest manifest = load_manifest(probing ? probe_data : ret_data);
    const std::string views_arg = probing ? probe_views : ret_views;
    std::vector<std::string> views =
        views_arg.empty() ? std::vector<std::string>{lc.cfg.eval_view} : split_csv(views_arg);
    const SkeletonTopology topo = SkeletonTopology::default_for(lc.cfg.train.enc.joints);
    std::map<std::string, double> metrics;
    std::vector<Mat> tables;
    std::vector<int> test_labels, train_labels;
    for (const std::string& vname : views) {
      const SkeletonView view = parse_view(vname);
      EmbeddingTable train =
          extract_embeddings(lc.state.model, lc.state.query, manifest, "train", view, topo);
      EmbeddingTable test =
          extract_embeddings(lc.state.model, lc.state.query, manifest, "test", view, topo);
      test_labels = test.labels;
      train_labels = train.labels;
      if (probing) {
        ProbeResult r = linear_probe(train, test, lc.cfg.probe);
        metrics["probe_acc_" + vname] = r.accuracy;
        tables.push_back(std::move(r.test_logits));
      } else {
        RetrievalResult r = retrieve_1nn(test, train);
        metrics["retrieval_acc_" + vname] = r.accuracy;
        tables.push_back(std::move(r.scores));
      }
    }
    if (views.size() > 1) {
      std::vector<const Mat*> ptrs;
      for (const Mat& t : tables) ptrs.push_back(&t);
      Mat fused = fuse_view_scores(ptrs);
      metrics[probing ? "probe_acc_fused" : "retrieval_acc_fused"] =
          probing ? classification_accuracy(fused, test_labels)
                  : retrieval_accuracy(fused, test_labels, train_labels);
    }
    write_metrics(metrics, args.out_dir);
    return 0;
  }

  if (ft_cmd->parsed()) {
    LoadedCheckpoint lc = open_checkpoint(ft_ckpt, ft_args.sets);
    if (ft_fraction > 0.0) lc.cfg.finetune.label_fraction = ft_fraction;
    write_effective_config(lc.cfg, ft_args.out_dir);
    DatasetManifest manifest = load_manifest(ft_data);
    const SkeletonView view = parse_view(ft_view.empty() ? lc.cfg.eval_view : ft_view);
    const SkeletonTopology topo = SkeletonTopology::default_for(lc.cfg.train.enc.joints);
    const double acc =
        finetune(lc.state.model, lc.state.query, manifest, view, topo, lc.cfg.finetune);
    write_metrics({{"finetune_acc", acc}, {"label_fraction", lc.cfg.finetune.label_fraction}},
                  ft_args.out_dir);
    return 0;
  }

  if (dbi_cmd->parsed()) {
    LoadedCheckpoint lc = open_checkpoint(dbi_ckpt, dbi_args.sets);
    write_effective_config(lc.cfg, dbi_args.out_dir);
    DatasetManifest manifest = load_manifest(dbi_data);
    const SkeletonView view = parse_view(dbi_view.empty() ? lc.cfg.eval_view : dbi_view);
    const SkeletonTopology topo = SkeletonTopology::default_for(lc.cfg.train.enc.joints);
    EmbeddingTable table =
        extract_embeddings(lc.state.model, lc.state.query, manifest, dbi_split, view, topo);
    write_metrics({{"dbi", davies_bouldin(table)}}, dbi_args.out_dir);
    return 0;
  }

  if (abl_cmd->parsed()) {
    FullConfig base = build_config(abl_args);
    write_effective_config(base, abl_args.out_dir);
    DatasetManifest manifest = load_manifest(abl_data);
    const std::vector<std::string> values = split_csv(abl_values);
    if (values.empty()) throw std::invalid_argument("--values is empty");
    std::ofstream csv(fs::path(abl_args.out_dir) / "ablate.csv");
    if (!csv) throw IoError("cannot write ablate.csv under " + abl_args.out_dir);
    csv << "axis,value,probe_acc,retrieval_acc\n";
    for (const std::string& value : values) {
      FullConfig cfg = base;
      if (abl_axis == "granularity") {
        set_config_value(cfg, "encoder.L", value);
      } else if (abl_axis == "branches") {
        set_config_value(cfg, "encoder.branches", value);
      } else if (abl_axis == "udm") {
        set_config_value(cfg, "encoder.udm", value);
      } else if (abl_axis == "fusion") {
        set_config_value(cfg, "encoder.fusion", value);
      } else if (abl_axis == "loss") {
        if (value == "instance") {
          cfg.train.toggles = {true, false, false};
        } else if (value == "instance_domain") {
          cfg.train.toggles = {true, true, false};
        } else if (value == "all") {
          cfg.train.toggles = {true, true, true};
        } else {
          throw std::invalid_argument("loss axis values: instance|instance_domain|all");
        }
      } else {
        throw std::invalid_argument("unknown ablation axis: " + abl_axis);
      }
      PretrainResult result = pretrain(manifest, cfg.train, serialize_config(cfg));
      MoCoState state = state_from_checkpoint(result.checkpoint, cfg.train);
      const SkeletonTopology topo = SkeletonTopology::default_for(cfg.train.enc.joints);
      EmbeddingTable train_t = extract_embeddings(state.model, state.query, manifest, "train",
                                                  SkeletonView::joint, topo);
      EmbeddingTable test_t = extract_embeddings(state.model, state.query, manifest, "test",
                                                 SkeletonView::joint, topo);
      const double probe_acc = linear_probe(train_t, test_t, cfg.probe).accuracy;
      const double ret_acc = retrieve_1nn(test_t, train_t).accuracy;
      char row[256];
      std::snprintf(row, sizeof(row), "%s,%s,%.6g,%.6g\n", abl_axis.c_str(), value.c_str(),
                    probe_acc, ret_acc);
      csv << row;
      std::cout << row;
    }
    return 0;
  }

  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
