// hfcloud: command-line driver for the super-pixel cloud detection pipeline.

#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>

#include "hfcloud/binio.hpp"
#include "hfcloud/error.hpp"
#include "hfcloud/pipeline.hpp"
#include "hfcloud/label_server.hpp"

namespace fs = std::filesystem;
using namespace hfcloud;

namespace {

void log(const std::string& msg) { std::cerr << "[hfcloud] " << msg << std::endl; }

struct Common {
  std::optional<std::string> config_path;
  std::optional<int> threads;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "pipeline config JSON (flags override it)")->check(CLI::ExistingFile);
  cmd->add_option("--threads", c.threads, "OpenMP thread count")->check(CLI::PositiveNumber);
  cmd->add_flag("--deterministic", c.deterministic, "single-threaded, bit-stable run");
}

PipelineConfig resolve_config(const Common& c) {
  PipelineConfig config;
  if (c.config_path) config = load_config(*c.config_path);
  if (c.threads) config.threads = *c.threads;
  if (c.deterministic) config.threads = 1;
  return config;
}

void apply_threads(const PipelineConfig& config) {
  if (config.threads > 0) omp_set_num_threads(config.threads);
}

template <typename T>
void set_if(const std::optional<T>& v, T& target) {
  if (v) target = *v;
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

MultiBandImage load_tile(const std::string& dir) { return load_image(dir); }

SuperPixelMap load_tile_map(const std::string& spxm_dir, const std::string& id) {
  return load_spxm(join(spxm_dir, id + ".spxm"));
}

void finish(const PipelineConfig& config, const std::string& out) {
  config.validate();
  fs::create_directories(out);
  save_config(config, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Super-pixel cloud detection pipeline"};
  app.require_subcommand(1);
  Common common;

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic tiles with ground truth");
  std::string synth_out;
  std::optional<std::uint64_t> synth_seed;
  int synth_count = 1;
  std::optional<int> synth_size, synth_thick, synth_halos, synth_buildings;
  std::string synth_prefix = "tile";
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "scene seed (tile i uses seed + i)");
  synth->add_option("--count", synth_count, "number of tiles")->check(CLI::PositiveNumber);
  synth->add_option("--tile-size", synth_size, "tile width and height in pixels");
  synth->add_option("--thick", synth_thick, "thick cloud blobs per tile");
  synth->add_option("--halos", synth_halos, "cirrus halos per tile");
  synth->add_option("--buildings", synth_buildings, "buildings per tile");
  synth->add_option("--prefix", synth_prefix, "tile directory prefix");
  add_common(synth, common);

  // edges
  auto* edges = app.add_subcommand("edges", "compute edge-probability maps");
  std::vector<std::string> edges_tiles;
  std::string edges_out;
  edges->add_option("tiles", edges_tiles, "tile directories")->required()->check(CLI::ExistingDirectory);
  edges->add_option("--out", edges_out, "output directory")->required();
  add_common(edges, common);

  // segment
  auto* seg = app.add_subcommand("segment", "segment tiles into super-pixels");
  std::vector<std::string> seg_tiles;
  std::string seg_out;
  std::optional<std::string> seg_edges;
  std::optional<int> seg_n, seg_iters;
  std::optional<double> seg_compact, seg_edge_w;
  std::optional<std::size_t> seg_min_area;
  seg->add_option("tiles", seg_tiles, "tile directories")->required()->check(CLI::ExistingDirectory);
  seg->add_option("--out", seg_out, "output directory for <tile>.spxm")->required();
  seg->add_option("--edges-dir", seg_edges, "use <tile>.edges.png maps from this directory")->check(CLI::ExistingDirectory);
  seg->add_option("--n-superpixels", seg_n);
  seg->add_option("--iterations", seg_iters);
  seg->add_option("--compactness", seg_compact);
  seg->add_option("--edge-weight", seg_edge_w);
  seg->add_option("--min-area", seg_min_area);
  add_common(seg, common);

  // label-from-gt
  auto* lgt = app.add_subcommand("label-from-gt", "label regions by majority ground-truth class");
  std::vector<std::string> lgt_tiles;
  std::string lgt_spxm, lgt_out;
  lgt->add_option("tiles", lgt_tiles, "tile directories with gt.png")->required()->check(CLI::ExistingDirectory);
  lgt->add_option("--spxm-dir", lgt_spxm, "directory of <tile>.spxm")->required()->check(CLI::ExistingDirectory);
  lgt->add_option("--out", lgt_out, "output directory for <tile>.labels.json")->required();
  add_common(lgt, common);

  // build-dataset
  auto* bds = app.add_subcommand("build-dataset", "extract labeled 32x32 patches");
  std::vector<std::string> bds_tiles;
  std::string bds_spxm, bds_labels, bds_out;
  bds->add_option("tiles", bds_tiles, "tile directories")->required()->check(CLI::ExistingDirectory);
  bds->add_option("--spxm-dir", bds_spxm)->required()->check(CLI::ExistingDirectory);
  bds->add_option("--labels-dir", bds_labels, "directory of <tile>.labels.json")->required()->check(CLI::ExistingDirectory);
  bds->add_option("--out", bds_out, "dataset directory")->required();
  add_common(bds, common);

  // split
  auto* spl = app.add_subcommand("split", "stratified train/validation split of a manifest");
  std::string spl_manifest;
  std::optional<std::string> spl_out;
  std::optional<double> spl_fraction;
  std::optional<std::uint64_t> spl_seed;
  spl->add_option("manifest", spl_manifest)->required()->check(CLI::ExistingFile);
  spl->add_option("--valid-fraction", spl_fraction);
  spl->add_option("--seed", spl_seed);
  spl->add_option("--out", spl_out, "output directory (default: manifest directory)");
  add_common(spl, common);

  // train-hfcnn
  auto* thf = app.add_subcommand("train-hfcnn", "train the hierarchical fusion CNN");
  std::string thf_train, thf_out;
  std::optional<std::string> thf_valid;
  std::optional<int> thf_iters, thf_batch;
  std::optional<double> thf_lr, thf_momentum;
  std::optional<std::uint64_t> thf_seed;
  thf->add_option("--train", thf_train)->required()->check(CLI::ExistingFile);
  thf->add_option("--valid", thf_valid)->check(CLI::ExistingFile);
  thf->add_option("--out", thf_out)->required();
  thf->add_option("--iterations", thf_iters);
  thf->add_option("--batch-size", thf_batch);
  thf->add_option("--lr", thf_lr);
  thf->add_option("--momentum", thf_momentum);
  thf->add_option("--seed", thf_seed);
  add_common(thf, common);

  // train-forest
  auto* tfo = app.add_subcommand("train-forest", "train the deep-forest cascade");
  std::string tfo_train, tfo_valid, tfo_out;
  std::optional<int> tfo_scan_trees, tfo_cascade_trees, tfo_stride, tfo_levels, tfo_patience;
  std::optional<std::vector<int>> tfo_windows;
  std::optional<std::size_t> tfo_cap;
  std::optional<std::uint64_t> tfo_seed;
  tfo->add_option("--train", tfo_train)->required()->check(CLI::ExistingFile);
  tfo->add_option("--valid", tfo_valid)->required()->check(CLI::ExistingFile);
  tfo->add_option("--out", tfo_out)->required();
  tfo->add_option("--scan-trees", tfo_scan_trees);
  tfo->add_option("--cascade-trees", tfo_cascade_trees);
  tfo->add_option("--windows", tfo_windows)->delimiter(',');
  tfo->add_option("--stride", tfo_stride);
  tfo->add_option("--max-levels", tfo_levels);
  tfo->add_option("--patience", tfo_patience);
  tfo->add_option("--max-instances-per-class", tfo_cap);
  tfo->add_option("--seed", tfo_seed);
  add_common(tfo, common);

  // predict
  auto* pre = app.add_subcommand("predict", "classify every super-pixel with both models");
  std::vector<std::string> pre_tiles;
  std::string pre_spxm, pre_hfcnn, pre_forest, pre_out;
  pre->add_option("tiles", pre_tiles)->required()->check(CLI::ExistingDirectory);
  pre->add_option("--spxm-dir", pre_spxm)->required()->check(CLI::ExistingDirectory);
  pre->add_option("--hfcnn", pre_hfcnn)->required()->check(CLI::ExistingFile);
  pre->add_option("--gcforest", pre_forest)->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out)->required();
  add_common(pre, common);

  // refine
  auto* ref = app.add_subcommand("refine", "NIR confirmation, relabeling and mask recovery");
  std::vector<std::string> ref_tiles;
  std::string ref_spxm, ref_pred, ref_out;
  std::optional<double> ref_nir;
  std::optional<int> ref_hops;
  std::optional<std::string> ref_agg, ref_group;
  ref->add_option("tiles", ref_tiles)->required()->check(CLI::ExistingDirectory);
  ref->add_option("--spxm-dir", ref_spxm)->required()->check(CLI::ExistingDirectory);
  ref->add_option("--pred-dir", ref_pred, "directory of <tile>.predictions.jsonl")->required()->check(CLI::ExistingDirectory);
  ref->add_option("--out", ref_out)->required();
  ref->add_option("--nir-threshold", ref_nir);
  ref->add_option("--hops", ref_hops);
  ref->add_option("--aggregation", ref_agg)->check(CLI::IsMember({"min", "mean"}));
  ref->add_option("--other-group", ref_group)->check(CLI::IsMember({"non_cloud", "other_culture"}));
  add_common(ref, common);

  // evaluate
  auto* eva = app.add_subcommand("evaluate", "super-pixel precision/recall/F-measure");
  std::vector<std::string> eva_tiles;
  std::string eva_spxm, eva_out;
  std::optional<std::string> eva_pred, eva_mask, eva_gt_mask;
  std::optional<double> eva_baseline;
  std::optional<bool> eva_cirrus;
  eva->add_option("tiles", eva_tiles)->required()->check(CLI::ExistingDirectory);
  eva->add_option("--spxm-dir", eva_spxm)->required()->check(CLI::ExistingDirectory);
  eva->add_option("--pred-dir", eva_pred, "predictions (ensemble) and refined predictions (pipeline)")->check(CLI::ExistingDirectory);
  eva->add_option("--mask-dir", eva_mask, "predicted masks <tile>.mask.png, counted per region")->check(CLI::ExistingDirectory);
  eva->add_option("--gt-mask-dir", eva_gt_mask, "ground-truth masks <tile>.mask.png instead of gt.png")->check(CLI::ExistingDirectory);
  eva->add_option("--nir-baseline", eva_baseline, "also score the NIR threshold baseline");
  eva->add_option("--cirrus-is-cloud", eva_cirrus);
  eva->add_option("--out", eva_out)->required();
  add_common(eva, common);

  // label-serve
  auto* srv = app.add_subcommand("label-serve", "HTTP label server for the annotator");
  std::string srv_tiles, srv_spxm, srv_labels, srv_host = "127.0.0.1";
  int srv_port = 8080;
  srv->add_option("--tiles-root", srv_tiles)->required()->check(CLI::ExistingDirectory);
  srv->add_option("--spxm-dir", srv_spxm)->required()->check(CLI::ExistingDirectory);
  srv->add_option("--labels-dir", srv_labels)->required();
  srv->add_option("--host", srv_host);
  srv->add_option("--port", srv_port);
  add_common(srv, common);

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig config = resolve_config(common);
    apply_threads(config);
    const auto t0 = std::chrono::steady_clock::now();

    if (*synth) {
      set_if(synth_seed, config.synth.seed);
      set_if(synth_size, config.synth.tile_size);
      set_if(synth_thick, config.synth.n_thick_blobs);
      set_if(synth_halos, config.synth.n_cirrus_halos);
      set_if(synth_buildings, config.synth.n_buildings);
      finish(config, synth_out);
      for (int i = 0; i < synth_count; ++i) {
        SceneParams p = config.synth;
        p.seed = config.synth.seed + static_cast<std::uint64_t>(i);
        const std::string dir = join(synth_out, synth_prefix + std::to_string(i));
        save_scene(generate_tile(p), dir);
        log("synth tile=" + dir + " seed=" + std::to_string(p.seed));
      }
    } else if (*edges) {
      finish(config, edges_out);
      for (const auto& t : edges_tiles) {
        const auto id = tile_id_of(t);
        save_edge_map(edge_probability(load_tile(t)), join(edges_out, id + ".edges.png"));
        log("edges tile=" + id);
      }
    } else if (*seg) {
      set_if(seg_n, config.segment.n_superpixels);
      set_if(seg_iters, config.segment.iterations);
      set_if(seg_compact, config.segment.compactness);
      set_if(seg_edge_w, config.segment.edge_weight);
      set_if(seg_min_area, config.min_area);
      finish(config, seg_out);
      for (const auto& t : seg_tiles) {
        const auto id = tile_id_of(t);
        const auto img = load_tile(t);
        std::optional<EdgeMap> em;
        if (seg_edges) em = load_edge_map(join(*seg_edges, id + ".edges.png"));
        const auto map = segment_tile(img, config, em ? &*em : nullptr);
        save_spxm(map, join(seg_out, id + ".spxm"));
        log("segment tile=" + id + " regions=" + std::to_string(map.n_regions));
      }
    } else if (*lgt) {
      finish(config, lgt_out);
      for (const auto& t : lgt_tiles) {
        const auto id = tile_id_of(t);
        const auto map = load_tile_map(lgt_spxm, id);
        const auto gt = load_ground_truth(join(t, "gt.png"), map.width, map.height);
        save_label_file(label_from_gt(id, map, gt), join(lgt_out, id + ".labels.json"));
        log("label-from-gt tile=" + id + " regions=" + std::to_string(map.n_regions));
      }
    } else if (*bds) {
      finish(config, bds_out);
      std::vector<MultiBandImage> images;
      std::vector<SuperPixelMap> maps;
      std::vector<LabelFile> labels;
      for (const auto& t : bds_tiles) {
        const auto id = tile_id_of(t);
        images.push_back(load_tile(t));
        maps.push_back(load_tile_map(bds_spxm, id));
        labels.push_back(load_label_file(join(bds_labels, id + ".labels.json")));
      }
      std::vector<DatasetTile> tiles;
      for (std::size_t i = 0; i < bds_tiles.size(); ++i) tiles.push_back({tile_id_of(bds_tiles[i]), &images[i], &maps[i]});
      const auto m = build_dataset(tiles, labels, bds_out);
      const auto counts = m.class_counts();
      log("build-dataset patches=" + std::to_string(m.size()) + " thick=" + std::to_string(counts[0]) +
          " cirrus=" + std::to_string(counts[1]) + " building=" + std::to_string(counts[2]) +
          " other=" + std::to_string(counts[3]));
    } else if (*spl) {
      set_if(spl_fraction, config.valid_fraction);
      set_if(spl_seed, config.split_seed);
      const std::string out = spl_out.value_or(fs::path(spl_manifest).parent_path().string());
      finish(config, out);
      auto m = load_manifest(spl_manifest);
      if (fs::weakly_canonical(out) != fs::weakly_canonical(m.base_dir))
        for (auto& e : m.entries) e.path = fs::absolute(m.resolve(e)).string();
      auto [train, valid] = split(m, config.valid_fraction, config.split_seed);
      save_manifest(train, join(out, "train.jsonl"));
      save_manifest(valid, join(out, "valid.jsonl"));
      log("split train=" + std::to_string(train.size()) + " valid=" + std::to_string(valid.size()));
    } else if (*thf) {
      set_if(thf_iters, config.hfcnn.max_iterations);
      set_if(thf_batch, config.hfcnn.batch_size);
      set_if(thf_lr, config.hfcnn.lr);
      set_if(thf_momentum, config.hfcnn.momentum);
      set_if(thf_seed, config.hfcnn.seed);
      finish(config, thf_out);
      const auto m = load_manifest(thf_train);
      std::vector<std::size_t> all(m.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const auto data = load_batch(m, all);
      auto model = HfcnnModel::initialized(config.hfcnn.seed);
      const int every = std::max(1, config.hfcnn.max_iterations / 20);
      const auto history = train(model, data, config.hfcnn, [&](int it, float loss, float acc) {
        if ((it + 1) % every == 0)
          log("train-hfcnn iter=" + std::to_string(it + 1) + " loss=" + std::to_string(loss) + " batch_acc=" + std::to_string(acc));
      });
      save_hfcnn(model, join(thf_out, "hfcnn.hfcn"));
      std::string csv = "iteration,loss,batch_accuracy\n";
      for (std::size_t i = 0; i < history.loss.size(); ++i)
        csv += std::to_string(i + 1) + "," + std::to_string(history.loss[i]) + "," + std::to_string(history.accuracy[i]) + "\n";
      binio::write_text(join(thf_out, "history.csv"), csv);
      log("train-hfcnn train_acc=" + std::to_string(accuracy(model, data)));
      if (thf_valid) {
        const auto v = load_manifest(*thf_valid);
        std::vector<std::size_t> vi(v.size());
        for (std::size_t i = 0; i < vi.size(); ++i) vi[i] = i;
        log("train-hfcnn valid_acc=" + std::to_string(accuracy(model, load_batch(v, vi))));
      }
    } else if (*tfo) {
      auto& g = config.gcforest;
      set_if(tfo_scan_trees, g.scan.n_trees);
      set_if(tfo_cascade_trees, g.cascade.n_trees);
      set_if(tfo_windows, g.scan.windows);
      set_if(tfo_stride, g.scan.stride);
      set_if(tfo_levels, g.cascade.max_levels);
      set_if(tfo_patience, g.cascade.patience);
      set_if(tfo_cap, g.scan.max_instances_per_class);
      set_if(tfo_seed, g.seed);
      finish(config, tfo_out);
      auto load_all = [](const std::string& path) {
        const auto m = load_manifest(path);
        std::vector<std::size_t> idx(m.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        return load_batch(m, idx);
      };
      const auto tr = load_all(tfo_train), va = load_all(tfo_valid);
      const auto model = train_gcforest(tr.images, tr.labels, va.images, va.labels, g);
      save_gcforest(model, join(tfo_out, "gcforest.gcfs"));
      std::string accs;
      for (double a : model.level_accuracy) accs += (accs.empty() ? "" : ",") + std::to_string(a);
      log("train-forest levels=" + std::to_string(model.level_accuracy.size()) + " best_level=" +
          std::to_string(model.best_level) + " valid_acc=[" + accs + "]");
    } else if (*pre) {
      finish(config, pre_out);
      const auto cnn = load_hfcnn(pre_hfcnn);
      const auto forest = load_gcforest(pre_forest);
      for (const auto& t : pre_tiles) {
        const auto id = tile_id_of(t);
        const auto img = load_tile(t);
        const auto map = load_tile_map(pre_spxm, id);
        const auto preds = predict_tile(img, map, cnn, forest);
        save_predictions(preds, join(pre_out, id + ".predictions.jsonl"));
        save_mask(binary_mask(map, preds), join(pre_out, id + ".ensemble_mask.png"));
        log("predict tile=" + id + " regions=" + std::to_string(preds.size()));
      }
    } else if (*ref) {
      set_if(ref_nir, config.refine.nir_threshold);
      set_if(ref_hops, config.refine.hops);
      if (ref_agg) config.refine.aggregation = *ref_agg == "min" ? NeighborAggregation::min : NeighborAggregation::mean;
      if (ref_group) config.refine.other_group = *ref_group == "non_cloud" ? OtherGroup::non_cloud : OtherGroup::other_culture;
      finish(config, ref_out);
      for (const auto& t : ref_tiles) {
        const auto id = tile_id_of(t);
        const auto img = load_tile(t);
        const auto map = load_tile_map(ref_spxm, id);
        auto preds = load_predictions(join(ref_pred, id + ".predictions.jsonl"));
        preds = refine_tile(std::move(preds), img, map, config.refine);
        save_predictions(preds, join(ref_out, id + ".refined.jsonl"));
        save_mask(binary_mask(map, preds), join(ref_out, id + ".mask.png"));
        std::size_t relabeled = 0, demoted = 0;
        for (const auto& p : preds) {
          relabeled += p.relabeled;
          demoted += p.nir_demoted;
        }
        log("refine tile=" + id + " nir_demoted=" + std::to_string(demoted) + " relabeled=" + std::to_string(relabeled));
      }
    } else if (*eva) {
      set_if(eva_cirrus, config.cirrus_is_cloud);
      if (eva_baseline) config.refine.nir_threshold = *eva_baseline;
      finish(config, eva_out);
      std::vector<TileEval> results;
      for (const auto& t : eva_tiles) {
        const auto id = tile_id_of(t);
        const auto map = load_tile_map(eva_spxm, id);
        std::vector<std::uint8_t> gt;
        if (eva_gt_mask) {
          gt = pixel_mask_to_regions(load_mask(join(*eva_gt_mask, id + ".mask.png")), map);
        } else {
          const auto raster = load_ground_truth(join(t, "gt.png"), map.width, map.height);
          gt = cloud_flags(majority_labels(raster, map), config.cirrus_is_cloud);
        }
        bool any = false;
        auto score = [&](const std::string& method, const std::vector<std::uint8_t>& pred) {
          results.push_back({id, method, superpixel_prf(pred, gt)});
          any = true;
        };
        if (eva_pred) {
          const auto ens = join(*eva_pred, id + ".predictions.jsonl");
          const auto pipe = join(*eva_pred, id + ".refined.jsonl");
          if (fs::exists(ens)) score("ensemble", cloud_flags(labels_of(load_predictions(ens)), false));
          if (fs::exists(pipe)) score("pipeline", cloud_flags(labels_of(load_predictions(pipe)), false));
        }
        if (eva_mask) score("mask", pixel_mask_to_regions(load_mask(join(*eva_mask, id + ".mask.png")), map));
        if (eva_baseline) {
          char name[32];
          std::snprintf(name, sizeof name, "nir_%g", *eva_baseline);
          score(name, nir_baseline(load_tile(t), map, *eva_baseline));
        }
        if (!any) throw Error(Errc::missing_file, "nothing to evaluate for tile " + id);
      }
      binio::write_text(join(eva_out, "report.json"), report_json(results));
      binio::write_text(join(eva_out, "report.csv"), report_csv(results));
      std::cout << report_csv(results);
    } else if (*srv) {
      fs::create_directories(srv_labels);
      LabelStore store(srv_tiles, srv_spxm, srv_labels);
      LabelServer server(store);
      log("label-serve http://" + srv_host + ":" + std::to_string(srv_port));
      server.run(srv_host, srv_port);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log("done seconds=" + std::to_string(secs));
  } catch (const Error& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
