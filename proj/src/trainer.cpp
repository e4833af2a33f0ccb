#include "mgfi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mgfi/errors.hpp"
#include "mgfi/tape.hpp"

#include <json.hpp>

namespace mgfi {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
    model.validate();
    if (batch_size < 1) throw DataError("train config: batch_size must be >= 1");
    if (!(learning_rate > 0.0f)) throw DataError("train config: learning_rate must be > 0");
    if (max_epochs < 1) throw DataError("train config: max_epochs must be >= 1");
    if (patience < 1) throw DataError("train config: patience must be >= 1");
}

TrainConfig train_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("train config: malformed JSON: ") + e.what());
    }
    TrainConfig c;
    if (j.contains("model")) {
        c.model = model_config_from_json(j["model"].dump());
    }
    if (j.contains("synth")) {
        const json& s = j["synth"];
        if (s.contains("count")) c.synth.count = s["count"].get<int>();
        if (s.contains("size")) c.synth.size = s["size"].get<int>();
        if (s.contains("channels")) c.synth.channels = s["channels"].get<int>();
        if (s.contains("blob_count_min")) c.synth.blob_count_min = s["blob_count_min"].get<int>();
        if (s.contains("blob_count_max")) c.synth.blob_count_max = s["blob_count_max"].get<int>();
        if (s.contains("radius_min")) c.synth.radius_min = s["radius_min"].get<float>();
        if (s.contains("radius_max")) c.synth.radius_max = s["radius_max"].get<float>();
        if (s.contains("contrast")) c.synth.contrast = s["contrast"].get<float>();
        if (s.contains("noise_sigma")) c.synth.noise_sigma = s["noise_sigma"].get<float>();
        if (s.contains("irregularity")) c.synth.irregularity = s["irregularity"].get<float>();
        if (s.contains("seed")) c.synth.seed = s["seed"].get<std::uint64_t>();
    }
    if (j.contains("dataset_path")) c.dataset_path = j["dataset_path"].get<std::string>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<float>();
    if (j.contains("max_epochs")) c.max_epochs = j["max_epochs"].get<int>();
    if (j.contains("patience")) c.patience = j["patience"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    c.validate();
    return c;
}

std::string train_config_to_json(const TrainConfig& c) {
    json j;
    j["model"] = json::parse(model_config_to_json(c.model));
    j["synth"] = {{"count", c.synth.count},
                  {"size", c.synth.size},
                  {"channels", c.synth.channels},
                  {"blob_count_min", c.synth.blob_count_min},
                  {"blob_count_max", c.synth.blob_count_max},
                  {"radius_min", c.synth.radius_min},
                  {"radius_max", c.synth.radius_max},
                  {"contrast", c.synth.contrast},
                  {"noise_sigma", c.synth.noise_sigma},
                  {"irregularity", c.synth.irregularity},
                  {"seed", c.synth.seed}};
    if (!c.dataset_path.empty()) j["dataset_path"] = c.dataset_path;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    return j.dump(2);
}

std::string train_report_to_json(const TrainReport& r) {
    json j;
    j["epochs"] = json::array();
    for (const EpochStats& e : r.epochs) {
        j["epochs"].push_back({{"epoch", e.epoch},
                               {"train_total", e.train_total},
                               {"train_ce", e.train_ce},
                               {"train_dice", e.train_dice},
                               {"train_boundary", e.train_boundary},
                               {"val_dice", e.val_dice}});
    }
    j["best_epoch"] = r.best_epoch;
    j["best_val_dice"] = r.best_val_dice;
    j["checkpoint"] = r.checkpoint_path;
    j["test"] = {{"accuracy", r.test.accuracy},
                 {"dice", r.test.dice},
                 {"iou", r.test.iou},
                 {"recall", r.test.recall},
                 {"precision", r.test.precision}};
    return j.dump(2);
}

LoadedData resolve_dataset(const TrainConfig& config) {
    LoadedData out;
    if (!config.dataset_path.empty()) {
        Dataset ds = load_dataset(config.dataset_path);
        out.samples = std::move(ds.samples);
        out.split = std::move(ds.split);
        out.class_count = ds.class_count;
    } else {
        out.samples = synth_generate(config.synth);
        out.split = split(static_cast<int>(out.samples.size()), config.synth.seed);
        out.class_count = 2;
    }
    if (out.samples.empty() || out.split.train.empty()) {
        throw DataError("dataset is empty");
    }
    return out;
}

namespace {

struct Batch {
    Tensor images;
    LabelMask labels;
    BoundaryMask boundary;
};

Batch stack_batch(const std::vector<Sample>& samples, const std::vector<int>& order,
                  std::size_t first, std::size_t count, bool with_boundary,
                  const CannyConfig& canny_cfg) {
    const Sample& head = samples[static_cast<std::size_t>(order[first])];
    const Shape is = head.image.shape();
    Tensor images(static_cast<int>(count), is.c, is.h, is.w);
    Tensor labels(static_cast<int>(count), 1, is.h, is.w);
    Tensor boundary;
    if (with_boundary) boundary = Tensor(static_cast<int>(count), 1, is.h, is.w);
    const std::int64_t img_len = is.count();
    const std::int64_t mask_len = static_cast<std::int64_t>(is.h) * is.w;
    for (std::size_t i = 0; i < count; ++i) {
        const Sample& s = samples[static_cast<std::size_t>(order[first + i])];
        if (s.image.shape() != is) {
            throw DataError("batch mixes image shapes " + to_string(is) + " and " +
                            to_string(s.image.shape()));
        }
        std::copy(s.image.data(), s.image.data() + img_len,
                  images.mutable_data() + static_cast<std::int64_t>(i) * img_len);
        std::copy(s.label.values.data(), s.label.values.data() + mask_len,
                  labels.mutable_data() + static_cast<std::int64_t>(i) * mask_len);
        if (with_boundary) {
            BoundaryMask b = s.boundary.values.defined()
                                 ? s.boundary
                                 : boundary_from_labels(s.label, canny_cfg);
            std::copy(b.values.data(), b.values.data() + mask_len,
                      boundary.mutable_data() + static_cast<std::int64_t>(i) * mask_len);
        }
    }
    Batch out;
    out.images = images;
    out.labels = LabelMask{labels};
    if (with_boundary) out.boundary = BoundaryMask{boundary};
    return out;
}

LabelMask argmax_channels(const Tensor& logits) {
    const Shape s = logits.shape();
    Tensor out(s.n, 1, s.h, s.w);
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    const float* lv = logits.data();
    float* ov = out.mutable_data();
    for (int n = 0; n < s.n; ++n) {
        for (std::int64_t p = 0; p < plane; ++p) {
            int best = 0;
            float best_v = lv[static_cast<std::int64_t>(n) * s.c * plane + p];
            for (int c = 1; c < s.c; ++c) {
                const float v = lv[(static_cast<std::int64_t>(n) * s.c + c) * plane + p];
                if (v > best_v) {
                    best_v = v;
                    best = c;
                }
            }
            ov[n * plane + p] = static_cast<float>(best);
        }
    }
    return LabelMask{out};
}

double mean_val_dice(NetworkParams& params, const ModelConfig& config,
                     const std::vector<Sample>& samples, const std::vector<int>& idx) {
    double acc = 0.0;
    for (int i : idx) {
        const Sample& s = samples[static_cast<std::size_t>(i)];
        ModelOutput out = model_forward(s.image, params, config, /*training=*/false);
        LabelMask pred = argmax_channels(out.seg_logits);
        acc += report_for_masks(pred, s.label, config.class_count).dice;
    }
    return acc / static_cast<double>(idx.size());
}

}  // namespace

MetricReport evaluate_samples(NetworkParams& params, const ModelConfig& config,
                              const std::vector<Sample>& samples, bool oracle) {
    if (samples.empty()) throw DataError("evaluate: no samples");
    MetricReport mean;
    double lt = 0.0, lce = 0.0, ld = 0.0, lb = 0.0;
    const CannyConfig canny_cfg;
    for (const Sample& s : samples) {
        Tensor logits;
        Tensor edge;
        if (oracle) {
            const Shape ls = s.label.values.shape();
            Tensor onehot(1, config.class_count, ls.h, ls.w);
            const std::int64_t plane = static_cast<std::int64_t>(ls.h) * ls.w;
            for (std::int64_t p = 0; p < plane; ++p) {
                const int cls = static_cast<int>(s.label.values.data()[p]);
                // large margin so softmax saturates
                for (int c = 0; c < config.class_count; ++c) {
                    onehot.mutable_data()[c * plane + p] = c == cls ? 20.0f : -20.0f;
                }
            }
            logits = onehot;
        } else {
            ModelOutput out = model_forward(s.image, params, config, /*training=*/false);
            logits = out.seg_logits;
            edge = out.edge_map;
        }
        LabelMask pred = argmax_channels(logits);
        const MetricReport r = report_for_masks(pred, s.label, config.class_count);
        mean.accuracy += r.accuracy;
        mean.dice += r.dice;
        mean.iou += r.iou;
        mean.recall += r.recall;
        mean.precision += r.precision;

        BoundaryMask gt = s.boundary.values.defined()
                              ? s.boundary
                              : boundary_from_labels(s.label, canny_cfg);
        LossBreakdown loss = hybrid_loss(softmax_channels(logits), edge, s.label, gt,
                                         config.lambda_boundary);
        lt += loss.total_value;
        lce += loss.ce;
        ld += loss.dice;
        lb += loss.boundary;
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    mean.accuracy *= inv;
    mean.dice *= inv;
    mean.iou *= inv;
    mean.recall *= inv;
    mean.precision *= inv;
    mean.loss_total = lt * inv;
    mean.loss_ce = lce * inv;
    mean.loss_dice = ld * inv;
    mean.loss_boundary = lb * inv;
    return mean;
}

Prediction predict(NetworkParams& params, const ModelConfig& config,
                   const Tensor& image) {
    ModelOutput out = model_forward(image, params, config, /*training=*/false);
    Prediction p;
    p.mask = argmax_channels(out.seg_logits);
    p.edge = out.edge_map;
    return p;
}

TrainReport train(const TrainConfig& config) {
    config.validate();
    LoadedData data = resolve_dataset(config);
    if (data.class_count != config.model.class_count) {
        throw DataError("dataset has " + std::to_string(data.class_count) +
                        " classes, model config expects " +
                        std::to_string(config.model.class_count));
    }
    const Shape is = data.samples[0].image.shape();
    const int div = config.model.required_divisor();
    if (is.h % div != 0 || is.w % div != 0) {
        throw DataError("image size " + std::to_string(is.h) + "x" + std::to_string(is.w) +
                        " must be divisible by " + std::to_string(div));
    }
    if (is.c != config.model.input_channels) {
        throw DataError("images have " + std::to_string(is.c) +
                        " channels, model expects " +
                        std::to_string(config.model.input_channels));
    }

    // pre-compute boundaries for un-augmented splits
    const CannyConfig canny_cfg;
    for (Sample& s : data.samples) {
        s.boundary = boundary_from_labels(s.label, canny_cfg);
    }

    NetworkParams params = param_init(config.model, config.model.seed);
    AdamState adam;
    adam.learning_rate = config.learning_rate;

    fs::create_directories(config.out_dir);
    const std::string ckpt_path = (fs::path(config.out_dir) / "best.ckpt").string();

    TrainReport report;
    report.checkpoint_path = ckpt_path;
    double best_dice = -1.0;
    int best_epoch = 0;
    bool saved_any = false;

    std::vector<int> order = data.split.train;
    const bool use_edge = config.model.ae_enabled();

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        // seeded shuffle per epoch
        Rng shuffle_rng(derive_seed(config.seed, 0x5A5A5A5Aull + epoch));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            const int j = shuffle_rng.uniform_int(0, i);
            std::swap(order[i], order[j]);
        }

        // augmented copies for this epoch, deterministic per (epoch, slot)
        std::vector<Sample> epoch_samples;
        epoch_samples.reserve(order.size());
        std::vector<int> epoch_idx(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            Rng aug_rng(derive_seed(config.seed,
                                    (static_cast<std::uint64_t>(epoch) << 32) + i));
            epoch_samples.push_back(
                augment(data.samples[static_cast<std::size_t>(order[i])], aug_rng));
            epoch_idx[i] = static_cast<int>(i);
        }

        double sum_total = 0.0, sum_ce = 0.0, sum_dice = 0.0, sum_bd = 0.0;
        std::int64_t seen = 0;
        for (std::size_t first = 0; first < epoch_samples.size();
             first += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t count =
                std::min(static_cast<std::size_t>(config.batch_size),
                         epoch_samples.size() - first);
            Batch batch =
                stack_batch(epoch_samples, epoch_idx, first, count, use_edge, canny_cfg);

            NetworkParams wp = params;
            Tape tape;
            std::vector<Tensor> watched;
            for_each_param(wp, config.model,
                           [&tape, &watched](const std::string&, Tensor& t) {
                               t = tape.watch(t);
                               watched.push_back(t);
                           });
            ModelOutput out = model_forward(batch.images, wp, config.model,
                                            /*training=*/true);
            Tensor probs = softmax_channels(out.seg_logits);
            LossBreakdown loss = hybrid_loss(probs, out.edge_map, batch.labels,
                                             batch.boundary,
                                             config.model.lambda_boundary);
            if (!std::isfinite(loss.total_value)) {
                throw NumericError("non-finite training loss at epoch " +
                                   std::to_string(epoch));
            }
            GradientMap grads = tape.backward(loss.total);

            std::vector<Tensor> values;
            std::vector<Tensor> gvec;
            values.reserve(watched.size());
            gvec.reserve(watched.size());
            for (const Tensor& w : watched) {
                values.push_back(w);
                gvec.push_back(grads.at(w));
            }
            adam_step(values, gvec, adam);

            // write updated values and batchnorm running stats back
            std::size_t slot = 0;
            for_each_param(params, config.model,
                           [&values, &slot](const std::string&, Tensor& t) {
                               t = values[slot++];
                           });
            std::vector<Tensor> buffers;
            for_each_buffer(wp, config.model,
                            [&buffers](const std::string&, Tensor& t) {
                                buffers.push_back(t);
                            });
            slot = 0;
            for_each_buffer(params, config.model,
                            [&buffers, &slot](const std::string&, Tensor& t) {
                                t = buffers[slot++];
                            });

            sum_total += loss.total_value * static_cast<double>(count);
            sum_ce += loss.ce * static_cast<double>(count);
            sum_dice += loss.dice * static_cast<double>(count);
            sum_bd += loss.boundary * static_cast<double>(count);
            seen += static_cast<std::int64_t>(count);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_total = sum_total / static_cast<double>(seen);
        stats.train_ce = sum_ce / static_cast<double>(seen);
        stats.train_dice = sum_dice / static_cast<double>(seen);
        stats.train_boundary = sum_bd / static_cast<double>(seen);
        stats.val_dice = data.split.val.empty()
                             ? 0.0
                             : mean_val_dice(params, config.model, data.samples,
                                             data.split.val);
        report.epochs.push_back(stats);

        if (stats.val_dice > best_dice) {
            best_dice = stats.val_dice;
            best_epoch = epoch;
            save_checkpoint(ckpt_path, config.model, params);
            saved_any = true;
        }
        if (epoch - best_epoch >= config.patience) break;
    }

    if (!saved_any) {
        save_checkpoint(ckpt_path, config.model, params);
        best_epoch = static_cast<int>(report.epochs.size());
        best_dice = report.epochs.empty() ? 0.0 : report.epochs.back().val_dice;
    }
    report.best_epoch = best_epoch;
    report.best_val_dice = best_dice;

    // test metrics with the best parameters
    auto [best_cfg, best_params] = load_checkpoint(ckpt_path);
    std::vector<Sample> test_samples;
    for (int i : data.split.test) {
        test_samples.push_back(data.samples[static_cast<std::size_t>(i)]);
    }
    if (!test_samples.empty()) {
        report.test = evaluate_samples(best_params, best_cfg, test_samples);
    }

    std::ofstream rf(fs::path(config.out_dir) / "train_report.json");
    rf << train_report_to_json(report) << "\n";
    return report;
}

std::vector<std::pair<std::string, MetricReport>> ablate(const TrainConfig& config) {
    std::vector<std::pair<std::string, MetricReport>> rows;
    struct VariantSpec {
        const char* name;
        void (*apply)(ModelConfig&);
    };
    static const VariantSpec variants[] = {
        {"mgfi-net", [](ModelConfig&) {}},
        {"no-mgfi-upper", [](ModelConfig& m) { m.no_mgfi_upper = true; }},
        {"no-mgfi-lower", [](ModelConfig& m) { m.no_mgfi_lower = true; }},
        {"no-mgfi", [](ModelConfig& m) { m.no_mgfi = true; }},
        {"no-ae", [](ModelConfig& m) { m.no_ae = true; }},
    };
    for (const VariantSpec& v : variants) {
        TrainConfig c = config;
        v.apply(c.model);
        c.out_dir = (fs::path(config.out_dir) / v.name).string();
        TrainReport r = train(c);
        rows.emplace_back(v.name, r.test);
    }
    return rows;
}

}  // namespace mgfi
