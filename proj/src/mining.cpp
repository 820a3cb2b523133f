#include "ltf/mining.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ltf/checkpoint.hpp"
#include "ltf/error.hpp"

namespace ltf {

using nlohmann::json;

const char* allocation_name(Allocation a) {
    return a == Allocation::UniformPerClass ? "uniform_per_class"
                                            : "proportional_to_class_frequency";
}

Allocation allocation_from_name(const std::string& s) {
    if (s == "uniform_per_class") return Allocation::UniformPerClass;
    if (s == "proportional_to_class_frequency") return Allocation::ProportionalToClassFrequency;
    throw ContractError("unknown allocation policy '" + s + "'");
}

void MiningSchedule::validate() const {
    for (auto e : generation_epochs) {
        if (e >= total_epochs) {
            throw ContractError("generation epoch " + std::to_string(e) +
                                " outside [0, total_epochs)");
        }
    }
    if (!std::is_sorted(generation_epochs.begin(), generation_epochs.end())) {
        throw ContractError("generation epochs must be sorted");
    }
}

std::vector<std::size_t> allocate_per_class(std::size_t quota,
                                            const std::vector<std::size_t>& class_counts,
                                            Allocation policy) {
    const std::size_t C = class_counts.size();
    std::vector<std::size_t> out(C, 0);
    if (quota == 0 || C == 0) return out;

    if (policy == Allocation::UniformPerClass) {
        const std::size_t base = quota / C, rem = quota % C;
        for (std::size_t c = 0; c < C; ++c) out[c] = base + (c < rem ? 1 : 0);
        return out;
    }

    const double total = static_cast<double>(
        std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
    std::vector<double> frac(C);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < C; ++c) {
        const double share =
            static_cast<double>(quota) * static_cast<double>(class_counts[c]) / total;
        out[c] = static_cast<std::size_t>(share);
        frac[c] = share - static_cast<double>(out[c]);
        assigned += out[c];
    }
    // Largest remainder, ties to the lower class index.
    std::vector<std::size_t> order(C);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; assigned < quota; ++i) {
        out[order[i % C]]++;
        ++assigned;
    }
    return out;
}

namespace {

// One fine-tune epoch with a persistent optimizer and batch stream.
double finetune_epoch(ClassifierModel& m, Optimizer& opt,
                      const std::vector<LabeledPoint>& points, std::size_t batch,
                      Rng& order_rng) {
    const std::size_t n = points.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    const bool use_oracle = !m.heads_.empty();
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t bsz = std::min(batch, n - start);
        std::vector<LabeledPoint> b(bsz);
        for (std::size_t i = 0; i < bsz; ++i) b[i] = points[order[start + i]];
        const Tensor x = points_matrix(b);
        const auto y = points_labels(b);
        Tape tape;
        TapeScope scope(tape);
        auto fwd = m.forward(x);
        Tensor loss = cross_entropy(fwd.base_logits, y);
        if (use_oracle) loss = add(loss, oracle_loss(fwd.head_logits, y));
        tape.backward(loss);
        opt.step();
        opt.zero_grad();
        epoch_loss += loss.item() * static_cast<double>(bsz);
    }
    return epoch_loss / static_cast<double>(n);
}

}  // namespace

std::vector<double> finetune_classifier(ClassifierModel& m,
                                        const std::vector<LabeledPoint>& points,
                                        std::size_t epochs, double lr, std::size_t batch,
                                        std::uint64_t seed) {
    // Same optimizer setup and batch stream as the mining loop, so a mining
    // run with no generation epochs reproduces this exactly.
    OptimizerConfig ocfg;
    ocfg.kind = OptimizerKind::SgdMomentum;
    ocfg.lr = lr;
    ocfg.cosine_decay = false;
    Optimizer opt(m.params(), ocfg);
    Rng order_rng(derive_seed(seed, "mining_batches"));
    std::vector<double> losses;
    for (std::size_t e = 0; e < epochs; ++e) {
        losses.push_back(finetune_epoch(m, opt, points, batch, order_rng));
    }
    return losses;
}

MiningResult run_mining_loop(ClassifierModel& model, const DiffusionStack& stack,
                             const MiningConfig& cfg, const LongtailDataset& train,
                             const LongtailDataset& val, std::uint64_t seed) {
    cfg.schedule.validate();
    MiningResult result;
    result.manifest.seed = seed;

    OptimizerConfig ocfg;
    ocfg.kind = OptimizerKind::SgdMomentum;
    ocfg.lr = cfg.finetune_lr;
    ocfg.cosine_decay = false;
    Optimizer opt(model.params(), ocfg);
    Rng order_rng(derive_seed(seed, "mining_batches"));

    std::vector<std::size_t> all_classes(train.num_classes());
    std::iota(all_classes.begin(), all_classes.end(), 0);

    std::optional<double> chosen_w = cfg.fixed_w;
    std::size_t round_index = 0;

    for (std::size_t epoch = 0; epoch < cfg.schedule.total_epochs; ++epoch) {
        const bool generate = std::find(cfg.schedule.generation_epochs.begin(),
                                        cfg.schedule.generation_epochs.end(),
                                        epoch) != cfg.schedule.generation_epochs.end();
        if (generate) {
            const std::uint64_t frozen = model.checksum();
            RoundRecord round;
            round.epoch = epoch;
            round.checkpoint_id = checkpoint_id(model);

            if (!chosen_w.has_value() || (cfg.reselect_each_round && !cfg.fixed_w)) {
                const auto sel = select_guidance_weight(
                    model, stack, cfg.gcfg, all_classes, cfg.select_n_per_cell,
                    derive_seed(seed, "mining_select_round_" + std::to_string(round_index)),
                    cfg.scfg);
                chosen_w = sel.chosen_w;
                round.selection_evidence = sel.evidence;
            }
            round.w = *chosen_w;

            GuidanceConfig g = cfg.gcfg;
            g.w = *chosen_w;
            const auto alloc = allocate_per_class(cfg.schedule.per_round_quota,
                                                  train.class_counts, cfg.schedule.allocation);
            std::vector<SyntheticPoint> fresh;
            double sum_p = 0.0, sum_sig = 0.0;
            for (std::size_t c = 0; c < alloc.size(); ++c) {
                if (alloc[c] == 0) continue;
                const auto rep = generate_ltg(
                    model, stack, g, c, alloc[c],
                    derive_seed(seed, "mining_round_" + std::to_string(round_index) +
                                          "_class_" + std::to_string(c)),
                    cfg.scfg);
                for (const auto& row : rep.rows) {
                    SyntheticPoint sp;
                    sp.point.features = row.x;
                    sp.point.label = c;  // conditioning class, not the prediction
                    sp.prov.gen_epoch = epoch;
                    sp.prov.guidance_w = *chosen_w;
                    sp.prov.signal_kind = signal_name(g.signal.kind);
                    sp.prov.signal_value = row.signal_value;
                    sp.prov.checkpoint_id = round.checkpoint_id;
                    fresh.push_back(std::move(sp));
                }
                sum_p += rep.mean_p * static_cast<double>(rep.rows.size());
                sum_sig += rep.mean_signal * static_cast<double>(rep.rows.size());
            }
            result.pool.merge(fresh);
            round.generated = fresh.size();
            if (!fresh.empty()) {
                round.mean_p = sum_p / static_cast<double>(fresh.size());
                round.mean_signal = sum_sig / static_cast<double>(fresh.size());
            }
            if (model.checksum() != frozen) {
                throw GuidanceError("classifier changed during a generation phase");
            }
            result.manifest.rounds.push_back(round);

            if (!cfg.out_dir.empty()) {
                const std::string rdir =
                    cfg.out_dir + "/round_" + std::to_string(round_index);
                std::filesystem::create_directories(rdir);
                save_classifier(rdir + "/model.ckpt", model);
                save_pool(result.pool, rdir + "/pool.csv");
                GenerationBatchReport flat;
                flat.kind = g.signal.kind;
                flat.w = *chosen_w;
                for (const auto& sp : fresh) {
                    GenerationRow row;
                    row.x = sp.point.features;
                    row.predicted = sp.point.label;
                    row.signal_value = sp.prov.signal_value;
                    flat.rows.push_back(row);
                }
                save_generation_report(flat, rdir + "/report.csv");
            }
            ++round_index;
        }

        // Fine-tune on real + pool; real data is always in the mix.
        std::vector<LabeledPoint> combined = train.points;
        combined.reserve(train.points.size() + result.pool.size());
        for (const auto& sp : result.pool.points) combined.push_back(sp.point);
        const double loss = finetune_epoch(model, opt, combined, cfg.batch, order_rng);

        EpochMetric em;
        em.epoch = epoch;
        em.train_loss = loss;
        em.pool_size = result.pool.size();
        const auto ev = accuracy_by_split(model, val);
        em.val_overall = ev.overall;
        em.val_many = ev.many;
        em.val_medium = ev.medium;
        em.val_few = ev.few;
        result.manifest.epochs.push_back(em);
    }

    if (!cfg.out_dir.empty()) {
        save_manifest(result.manifest, cfg.out_dir + "/run_manifest.json");
    }
    return result;
}

void save_manifest(const RunManifest& m, const std::string& json_path) {
    json j;
    j["seed"] = m.seed;
    json rounds = json::array();
    for (const auto& r : m.rounds) {
        json jr = {{"epoch", r.epoch},
                   {"w", r.w},
                   {"checkpoint_id", r.checkpoint_id},
                   {"generated", r.generated},
                   {"mean_p_class", r.mean_p},
                   {"mean_signal", r.mean_signal}};
        json cells = json::array();
        for (const auto& c : r.selection_evidence) {
            cells.push_back({{"w", c.w},
                             {"mean_p_class", c.mean_p},
                             {"accuracy", c.accuracy},
                             {"mean_signal", c.mean_signal}});
        }
        jr["selection_evidence"] = cells;
        rounds.push_back(jr);
    }
    j["rounds"] = rounds;
    json epochs = json::array();
    for (const auto& e : m.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_overall", e.val_overall},
                          {"val_many", e.val_many},
                          {"val_medium", e.val_medium},
                          {"val_few", e.val_few},
                          {"pool_size", e.pool_size}});
    }
    j["epochs"] = epochs;
    std::ofstream os(json_path);
    if (!os) throw IoError("cannot open for write: " + json_path);
    os << j.dump(2) << "\n";
}

RunManifest load_manifest(const std::string& json_path) {
    std::ifstream is(json_path);
    if (!is) throw IoError("cannot open for read: " + json_path);
    json j;
    is >> j;
    RunManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jr : j.at("rounds")) {
        RoundRecord r;
        r.epoch = jr.at("epoch").get<std::size_t>();
        r.w = jr.at("w").get<double>();
        r.checkpoint_id = jr.at("checkpoint_id").get<std::string>();
        r.generated = jr.at("generated").get<std::size_t>();
        r.mean_p = jr.at("mean_p_class").get<double>();
        r.mean_signal = jr.at("mean_signal").get<double>();
        for (const auto& jc : jr.at("selection_evidence")) {
            WeightCell c;
            c.w = jc.at("w").get<double>();
            c.mean_p = jc.at("mean_p_class").get<double>();
            c.accuracy = jc.at("accuracy").get<double>();
            c.mean_signal = jc.at("mean_signal").get<double>();
            r.selection_evidence.push_back(c);
        }
        m.rounds.push_back(std::move(r));
    }
    for (const auto& je : j.at("epochs")) {
        EpochMetric e;
        e.epoch = je.at("epoch").get<std::size_t>();
        e.train_loss = je.at("train_loss").get<double>();
        e.val_overall = je.at("val_overall").get<double>();
        e.val_many = je.at("val_many").get<double>();
        e.val_medium = je.at("val_medium").get<double>();
        e.val_few = je.at("val_few").get<double>();
        e.pool_size = je.at("pool_size").get<std::size_t>();
        m.epochs.push_back(e);
    }
    return m;
}

}  // namespace ltf
