#include "calidrop/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "calidrop/active_learning.hpp"
#include "calidrop/calibration.hpp"
#include "calidrop/checkpoint.hpp"
#include "calidrop/diversity.hpp"
#include "calidrop/train.hpp"

namespace fs = std::filesystem;

namespace calidrop {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory: " + dir);
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
    atomic_write_text((fs::path(out_dir) / "config_resolved.txt").string(),
                      serialize_run_config(cfg));
}

EnsemblePredictions eval_ensemble(const RunConfig& cfg, const CommandOptions& opt,
                                  const ImageDataset& test) {
    if (opt.checkpoint_paths.empty())
        throw ConfigError("at least one --checkpoint is required");
    if (opt.checkpoint_paths.size() == 1) {
        ResNet<float> net(cfg.model, cfg.seed);
        const auto hdr = load_checkpoint(opt.checkpoint_paths[0], net);
        if (hdr.config_hash != net.config_hash())
            throw DataError("checkpoint was written for a different model config");
        return mc_predict(net, test.images, test.labels, cfg.eval.mc_samples,
                          "mc_" + to_string(cfg.model.dropout.variant));
    }
    std::vector<std::unique_ptr<ResNet<float>>> nets;
    std::vector<Model<float>*> ptrs;
    for (const auto& path : opt.checkpoint_paths) {
        auto net = std::make_unique<ResNet<float>>(cfg.model, cfg.seed);
        const auto hdr = load_checkpoint(path, *net);
        if (hdr.config_hash != net->config_hash())
            throw DataError("checkpoint was written for a different model config: " + path);
        ptrs.push_back(net.get());
        nets.push_back(std::move(net));
    }
    return deep_ensemble_predict(ptrs, test.images, test.labels);
}

}  // namespace

void atomic_write_file(const std::string& path, const std::vector<char>& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot open for writing: " + tmp);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw DataError("write failure: " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw DataError("cannot rename " + tmp + " to " + path);
}

void atomic_write_text(const std::string& path, const std::string& content) {
    atomic_write_file(path, std::vector<char>(content.begin(), content.end()));
}

RunConfig resolve_config(const CommandOptions& opt) {
    RunConfig cfg = opt.config_path.empty() ? RunConfig{} : load_run_config(opt.config_path);
    if (!opt.profile.empty()) apply_profile(cfg, opt.profile);
    if (opt.seed_override) cfg.seed = *opt.seed_override;
    cfg.validate();
    return cfg;
}

DataSplits load_splits(const RunConfig& cfg) {
    if (cfg.dataset.path.empty()) throw ConfigError("dataset path is not set");
    ImageDataset all;
    if (fs::is_directory(cfg.dataset.path)) {
        std::vector<std::string> files;
        for (int i = 1; i <= 5; ++i) {
            const fs::path p =
                fs::path(cfg.dataset.path) / ("data_batch_" + std::to_string(i) + ".bin");
            if (fs::exists(p)) files.push_back(p.string());
        }
        const fs::path test_p = fs::path(cfg.dataset.path) / "test_batch.bin";
        if (fs::exists(test_p)) files.push_back(test_p.string());
        if (files.empty())
            throw DataError("no CIFAR batch files found in " + cfg.dataset.path);
        all = load_cifar10_files(files);
    } else {
        all = load_cifar10_binary(cfg.dataset.path);
    }
    const int need = cfg.dataset.train_size + cfg.dataset.val_size + cfg.dataset.test_size;
    if (need > all.size())
        throw DataError("dataset has " + std::to_string(all.size()) + " records, " +
                        std::to_string(need) + " requested");
    auto parts = split(all,
                       {cfg.dataset.train_size, cfg.dataset.val_size, cfg.dataset.test_size},
                       detail::mix64(cfg.seed ^ 0x5f17e9d3ULL), cfg.dataset.stratified);
    DataSplits out{std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
    per_pixel_mean_subtract({&out.train, &out.val, &out.test});
    return out;
}

int cmd_train(const CommandOptions& opt) {
    const RunConfig cfg = resolve_config(opt);
    ensure_dir(opt.out_dir);
    DataSplits data = load_splits(cfg);

    ResNet<float> net(cfg.model, cfg.seed);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const FitResult<float> result =
        fit(net, data.train, data.val.size() ? &data.val : nullptr, tc);

    const std::string ckpt = (fs::path(opt.out_dir) / "checkpoint.bin").string();
    const std::string ckpt_tmp = ckpt + ".tmp";
    save_checkpoint(ckpt_tmp, net, net.config_hash(), cfg.seed);
    std::error_code ec;
    fs::rename(ckpt_tmp, ckpt, ec);
    if (ec) throw DataError("cannot rename checkpoint into place");

    std::ostringstream curve;
    curve << "epoch,lr,train_loss,train_accuracy,val_accuracy,val_nll\n";
    for (const EpochStats& st : result.curve)
        curve << st.epoch << "," << fmt(st.lr) << "," << fmt(st.train_loss) << ","
              << fmt(st.train_accuracy) << "," << fmt(st.val_accuracy) << ","
              << fmt(st.val_nll) << "\n";
    curve << "# selected_epoch=" << result.selected_epoch << "\n";
    atomic_write_text((fs::path(opt.out_dir) / "train_curve.txt").string(), curve.str());
    echo_config(cfg, opt.out_dir);
    return 0;
}

int cmd_mc_eval(const CommandOptions& opt) {
    const RunConfig cfg = resolve_config(opt);
    ensure_dir(opt.out_dir);
    DataSplits data = load_splits(cfg);

    const EnsemblePredictions ens = eval_ensemble(cfg, opt, data.test);
    {
        const std::string path = (fs::path(opt.out_dir) / "ensemble.bin").string();
        const std::string tmp = path + ".tmp";
        save_ensemble(tmp, ens);
        std::error_code ec;
        fs::rename(tmp, path, ec);
        if (ec) throw DataError("cannot rename ensemble file into place");
    }

    const PredictionSet avg = ensemble_average(ens);
    const CalibrationReport report = compute_calibration_report(
        avg, cfg.eval.num_bins, cfg.eval.bootstrap_reps, cfg.seed);
    atomic_write_text((fs::path(opt.out_dir) / "report.txt").string(),
                      calibration_report_text(report));
    atomic_write_text((fs::path(opt.out_dir) / "reliability.txt").string(),
                      reliability_table_text(report.bins));
    echo_config(cfg, opt.out_dir);
    return 0;
}

int cmd_diversity(const CommandOptions& opt) {
    const RunConfig cfg = resolve_config(opt);
    ensure_dir(opt.out_dir);

    EnsemblePredictions ens;
    if (!opt.ensemble_path.empty()) {
        ens = load_ensemble(opt.ensemble_path);
    } else {
        DataSplits data = load_splits(cfg);
        ens = eval_ensemble(cfg, opt, data.test);
    }
    ens.validate();

    std::ostringstream os;
    os << "source=" << ens.source << "\n";
    os << "members=" << ens.T << "\nsamples=" << ens.N << "\nclasses=" << ens.K << "\n";

    const BinaryEnsembleView view = binary_view(ens, cfg.eval.positive_class);
    const DecompositionReport dec = decompose_mse(view);
    os << "positive_class=" << cfg.eval.positive_class << "\n";
    os << "ensemble_mse=" << fmt(dec.ensemble_mse) << "\n";
    os << "avg_member_mse=" << fmt(dec.avg_member_mse) << "\n";
    os << "avg_ambiguity=" << fmt(dec.avg_ambiguity) << "\n";
    os << "decomposition_residual=" << fmt(dec.residual) << "\n";

    const EceDecompositionReport ed = ece_decomposition(view, nullptr, cfg.eval.num_bins);
    os << "binary_ece=" << fmt(ed.ece) << "\n";
    os << "refinement=" << fmt(ed.refinement) << "\n";
    os << "sharpness=" << fmt(ed.sharpness) << "\n";
    os << "label_variance=" << fmt(ed.label_variance) << "\n";
    os << "calibration_identity_residual=" << fmt(ed.eq_calibration_residual) << "\n";

    const CorrectnessMatrix cm = correctness_matrix(ens);
    const auto kappa = interrater_agreement(cm);
    os << "mean_member_accuracy=" << fmt(cm.pbar()) << "\n";
    os << "interrater_agreement=" << (kappa ? fmt(*kappa) : std::string("undefined")) << "\n";

    os << "size_curve:m,accuracy,accuracy_std,ece,ece_std\n";
    for (const SizeCurveRow& row :
         ensemble_size_curves(ens, ens.T, cfg.eval.num_bins, 200, cfg.seed))
        os << row.m << "," << fmt(row.accuracy) << "," << fmt(row.accuracy_std) << ","
           << fmt(row.ece) << "," << fmt(row.ece_std) << "\n";

    atomic_write_text((fs::path(opt.out_dir) / "diversity.txt").string(), os.str());
    echo_config(cfg, opt.out_dir);
    return 0;
}

int cmd_sweep(const CommandOptions& opt) {
    const RunConfig cfg = resolve_config(opt);
    ensure_dir(opt.out_dir);
    DataSplits data = load_splits(cfg);
    if (data.val.size() == 0) throw ConfigError("sweep requires a validation split");

    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const SweepResult sweep = grid_search_dropout_rate(
        cfg.model, tc, opt.sweep_rates, data.train, data.val, cfg.eval.mc_samples, cfg.seed);

    std::ostringstream os;
    os << "rate,val_nll,val_accuracy,status\n";
    for (const SweepRow& row : sweep.rows) {
        os << fmt(row.rate) << ",";
        if (row.failed)
            os << "nan,nan,failed:" << row.error << "\n";
        else
            os << fmt(row.val_nll) << "," << fmt(row.val_accuracy) << ",ok\n";
    }
    os << "# best_rate=" << fmt(sweep.best_rate) << "\n";
    atomic_write_text((fs::path(opt.out_dir) / "sweep.txt").string(), os.str());
    echo_config(cfg, opt.out_dir);
    return 0;
}

int cmd_active_learn(const CommandOptions& opt) {
    const RunConfig cfg = resolve_config(opt);
    ensure_dir(opt.out_dir);
    DataSplits data = load_splits(cfg);

    std::ostringstream os;
    os << "acquisition,round,labeled,mean_accuracy,std_accuracy,mean_relative_improvement\n";
    for (const std::string& name : cfg.al_acquisitions) {
        ALConfig al = cfg.al;
        al.acquisition = acquisition_from_string(name);
        ModelFactory factory = [&cfg](std::uint64_t seed) {
            return std::unique_ptr<Model<float>>(new ResNet<float>(cfg.model, seed));
        };
        const auto rows =
            run_al_loop(al, data.train, data.test, factory, cfg.train, cfg.seed);
        for (const ALRoundRow& row : rows)
            os << name << "," << row.round << "," << row.labeled_count << ","
               << fmt(row.mean_accuracy) << "," << fmt(row.std_accuracy) << ","
               << fmt(row.mean_relative_improvement) << "\n";
    }
    atomic_write_text((fs::path(opt.out_dir) / "active_learning.txt").string(), os.str());
    echo_config(cfg, opt.out_dir);
    return 0;
}

}  // namespace calidrop
