// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0

#include "neglab/pipeline/pipeline.hpp"

#include <chrono>
#include <iostream>

#include "neglab/corpus/formats.hpp"
#include "neglab/interpret.hpp"

namespace neglab {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void log(const std::string& msg) { std::clog << "[neglab] " << msg << std::endl; }

/// Unit-norm mean of the images with polarity p.
std::vector<float> polarity_centroid(const std::vector<ImageRecord>& images, Polarity p) {
    std::vector<double> sum;
    for (const auto& im : images) {
        if (im.polarity != p) continue;
        sum.resize(im.embedding.size(), 0.0);
        for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += im.embedding[k];
    }
    require(!sum.empty(), std::string("no test images with polarity ") + to_string(p));
    double n = 0;
    for (double v : sum) n += v * v;
    n = std::sqrt(n);
    std::vector<float> out(sum.size());
    for (std::size_t k = 0; k < sum.size(); ++k) out[k] = static_cast<float>(sum[k] / n);
    return out;
}

std::vector<Prompt> negated(const std::vector<Prompt>& prompts) {
    std::vector<Prompt> out;
    for (const auto& p : prompts)
        if (is_negated(p.category)) out.push_back(p);
    return out;
}

ojson loss_json(const std::vector<double>& trace) {
    ojson a = ojson::array();
    for (double v : trace) a.push_back(v);
    return a;
}

ojson provenance_json(const Provenance& p) {
    return {{"objective", p.objective}, {"learning_rate", p.learning_rate}, {"epochs", p.epochs},
            {"final_loss", p.final_loss}, {"config_hash", p.config_hash}, {"parent", p.parent}};
}

} // namespace

Pipeline::Pipeline(ExperimentConfig cfg) : cfg_(std::move(cfg)) {}

fs::path Pipeline::checkpoint_path(Model m) const {
    return cfg_.output_dir / "checkpoints" / (std::string(to_string(m)) + ".ckpt");
}

std::string Pipeline::rel(const fs::path& p) const { return p.lexically_relative(cfg_.output_dir).generic_string(); }

void Pipeline::write(const fs::path& p, const std::string& bytes) { bin::write_file_atomic(p, bytes); }

std::vector<Model> Pipeline::available_models() const {
    std::vector<Model> out;
    for (auto m : kAllModels)
        if (fs::exists(checkpoint_path(m))) out.push_back(m);
    return out;
}

void Pipeline::check_references(bool data_will_be_generated) const {
    if (cfg_.quadruplets) {
        const auto q = cfg_.resolve(*cfg_.quadruplets);
        const bool generated = data_will_be_generated && fs::weakly_canonical(q) ==
                                                             fs::weakly_canonical(CorpusFiles{data_dir()}.quadruplets());
        if (!generated && !fs::exists(q))
            throw ConfigError("con2_train.quadruplets", "file '" + q.string() + "' does not exist");
    }
    // The ablation image must name a test image of the configured corpus.
    const auto n_pos = static_cast<std::size_t>(std::llround(cfg_.gen.n_test_images * cfg_.gen.class_balance));
    const auto& id = cfg_.interpret.ablation_image;
    auto in_range = [&](const std::string& prefix, std::size_t count) {
        if (id.rfind(prefix, 0) != 0) return false;
        const auto num = id.substr(prefix.size());
        if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos) return false;
        const auto v = std::stoul(num);
        return v >= 1 && v <= count && id == detail::numbered(prefix, v);
    };
    if (!in_range("test_eff_", n_pos) && !in_range("test_noeff_", cfg_.gen.n_test_images - n_pos))
        throw ConfigError("interpret.ablation_image", "'" + id + "' is not a test image id of the configured corpus");
}

const Corpus& Pipeline::corpus(bool with_quadruplets) {
    if (corpus_ && (corpus_has_quadruplets_ || !with_quadruplets)) return *corpus_;
    CorpusFiles files{data_dir()};
    for (const auto& f : {files.train(), files.test(), files.prompts(), files.eval_prompts()})
        if (!fs::exists(f)) throw std::runtime_error("missing corpus file '" + f.string() + "' (run gen-data first)");
    fs::path quads;
    if (with_quadruplets) {
        if (!cfg_.quadruplets)
            throw ConfigError("con2_train.quadruplets", "missing: conclip fine-tuning needs a quadruplet CSV path");
        quads = cfg_.resolve(*cfg_.quadruplets);
        if (!fs::exists(quads))
            throw ConfigError("con2_train.quadruplets", "file '" + quads.string() + "' does not exist");
    } else {
        quads = files.quadruplets();
    }
    corpus_ = read_corpus(data_dir(), quads);
    corpus_has_quadruplets_ = with_quadruplets;
    return *corpus_;
}

Checkpoint Pipeline::load_model(Model m) const {
    const auto p = checkpoint_path(m);
    if (!fs::exists(p))
        throw std::runtime_error("missing checkpoint '" + p.string() + "' (train " + to_string(m) + " first)");
    return load_checkpoint(p);
}

ojson Pipeline::gen_data(bool force) {
    CorpusFiles files{data_dir()};
    if (!force)
        for (const auto& f : files.all())
            if (fs::exists(f))
                throw ConfigError("--force", "'" + f.string() + "' already exists; pass --force to overwrite");
    log("generating corpus");
    const auto c = generate_corpus(cfg_.gen);
    write_corpus(c, data_dir());
    corpus_.reset();
    ojson out = ojson::object();
    for (const auto& f : files.all()) out[f.filename().string()] = {{"path", rel(f)}, {"hash", bin::file_hash(f)}};
    return {{"files", out},
            {"train_images", c.train_images.size()},
            {"test_images", c.test_images.size()},
            {"training_prompts", c.prompts.size()},
            {"eval_prompts", c.eval_prompts.size()},
            {"quadruplets", c.quadruplets.size()}};
}

ojson Pipeline::pretrain() {
    const auto& c = corpus(false);
    log("pretraining base model");
    auto r = pretrain_base(c, cfg_.encoder, cfg_.base_train);
    const auto ckpt = checkpoint_path(Model::base);
    const auto loss = cfg_.output_dir / "reports" / "base_loss.csv";
    save_checkpoint(r.checkpoint, ckpt);
    write(loss, loss_trace_csv(r.loss_trace));
    return {{"checkpoint_path", rel(ckpt)},
            {"weights_hash", weights_hash(r.checkpoint)},
            {"provenance", provenance_json(r.checkpoint.provenance)},
            {"loss_csv_path", rel(loss)},
            {"loss_trace", loss_json(r.loss_trace)}};
}

ojson Pipeline::finetune(ObjectiveKind kind) {
    const bool conclip = kind == ObjectiveKind::conclip;
    const Model m = conclip ? Model::con2 : Model::con1;
    const auto& c = corpus(conclip);
    const auto start = load_model(Model::base);
    CorpusFiles files{data_dir()};
    const auto train_before = bin::file_hash(files.train());
    const auto test_before = bin::file_hash(files.test());

    log(std::string("fine-tuning ") + to_string(m) + " (" + to_string(kind) + ")");
    const TrainConfig& tc = conclip ? cfg_.con2_train : cfg_.con1_train;
    auto r = conclip ? neglab::finetune(start, TrainingData{c.quadruplets}, tc)
                     : neglab::finetune(start, TrainingData{c.pairs}, tc);

    const auto train_after = bin::file_hash(files.train());
    const auto test_after = bin::file_hash(files.test());
    const auto ckpt = checkpoint_path(m);
    const auto loss = cfg_.output_dir / "reports" / (std::string(to_string(m)) + "_loss.csv");
    save_checkpoint(r.checkpoint, ckpt);
    write(loss, loss_trace_csv(r.loss_trace));
    return {{"checkpoint_path", rel(ckpt)},
            {"weights_hash", weights_hash(r.checkpoint)},
            {"provenance", provenance_json(r.checkpoint.provenance)},
            {"loss_csv_path", rel(loss)},
            {"loss_trace", loss_json(r.loss_trace)},
            {"frozen_tower",
             {{"train_embeddings_before", train_before},
              {"train_embeddings_after", train_after},
              {"test_embeddings_before", test_before},
              {"test_embeddings_after", test_after},
              {"unchanged", train_before == train_after && test_before == test_after}}}};
}

ojson Pipeline::eval(Model m) {
    const auto& c = corpus(false);
    const auto model = load_model(m);
    log(std::string("evaluating ") + to_string(m));
    const auto ev = evaluate_checkpoint(model, c.test_images, c.eval_prompts, cfg_.eval.k, cfg_.eval.criterion);
    const auto dir = cfg_.output_dir / "reports";
    const auto json_path = dir / ("eval_" + std::string(to_string(m)) + ".json");
    write(json_path, ev.table.to_json().dump(2) + "\n");
    ojson out = {{"json_path", rel(json_path)}, {"table", ev.table.to_json()}};
    if (cfg_.eval.rankings_csv) {
        const auto csv_path = dir / ("rankings_" + std::string(to_string(m)) + ".csv");
        write(csv_path, rankings_csv(ev.rankings, cfg_.eval.k));
        out["rankings_csv_path"] = rel(csv_path);
    }
    out["negated_accuracy"] = ev.table.accuracy(Polarity::no_effusion);
    out["positive_accuracy"] = ev.table.accuracy(Polarity::effusion);
    return out;
}

ojson Pipeline::attribute(Model m) {
    const auto& c = corpus(false);
    const auto model = load_model(m);
    log(std::string("token attribution for ") + to_string(m));
    const auto image = polarity_centroid(c.test_images, Polarity::no_effusion);
    const auto s = attribution_summary(model, negated(c.eval_prompts), image);
    const auto path = cfg_.output_dir / "reports" / ("attribution_" + std::string(to_string(m)) + ".json");
    ojson doc = s.to_json(true);
    doc["image"] = "centroid of no_effusion test images";
    write(path, doc.dump(2) + "\n");
    ojson out = s.to_json(false);
    out["json_path"] = rel(path);
    return out;
}

ojson Pipeline::ablate_heads(Model m) {
    check_references(false);
    const auto& c = corpus(false);
    const auto model = load_model(m);
    log(std::string("head ablation for ") + to_string(m));
    const auto it = std::find_if(c.test_images.begin(), c.test_images.end(),
                                 [&](const auto& im) { return im.id == cfg_.interpret.ablation_image; });
    if (it == c.test_images.end())
        throw ConfigError("interpret.ablation_image", "'" + cfg_.interpret.ablation_image + "' is not in the test set");

    const auto dir = cfg_.output_dir / "reports";
    const std::string name = to_string(m);
    auto emit = [&](const AblationMap& map, const std::string& stem, const std::string& title) {
        const auto j = dir / (stem + ".json"), csvp = dir / (stem + ".csv"), svgp = dir / (stem + ".svg");
        write(j, map.to_json().dump(2) + "\n");
        write(csvp, map.to_csv());
        write(svgp, svg::ablation_heatmap(map, title));
        return ojson{{"json_path", rel(j)},
                     {"csv_path", rel(csvp)},
                     {"svg_path", rel(svgp)},
                     {"layers", map.layers},
                     {"heads", map.heads},
                     {"baseline", map.baseline}};
    };
    const auto single =
        head_ablation_map(model, cfg_.interpret.ablation_prompt, it->embedding, "ablation_prompt", it->id);
    ojson out = emit(single, "ablation_" + name, name + ": delta sim, '" + cfg_.interpret.ablation_prompt + "'");
    if (cfg_.interpret.averaged_ablation) {
        std::vector<const ImageRecord*> noeff;
        for (const auto& im : c.test_images)
            if (im.polarity == Polarity::no_effusion) noeff.push_back(&im);
        std::vector<AblationExample> examples;
        const auto prompts = negated(c.eval_prompts);
        for (std::size_t i = 0; i < prompts.size(); ++i) {
            const auto* im = noeff[i % noeff.size()];
            examples.push_back({prompts[i].id, prompts[i].text, im->id, im->embedding});
        }
        const auto avg = averaged_ablation_map(model, examples);
        out["averaged"] = emit(avg, "ablation_" + name + "_mean", name + ": mean delta sim over negated prompts");
        out["averaged"]["examples"] = avg.examples;
    }
    return out;
}

ojson Pipeline::tsne(Model m) {
    const auto& c = corpus(false);
    const auto model = load_model(m);
    log(std::string("t-SNE for ") + to_string(m));
    const auto embs = embed_prompts(model, c.eval_prompts);
    const auto x = embs.cast<double>();
    std::vector<std::string> labels;
    std::vector<int> groups;
    for (const auto& p : c.eval_prompts) {
        labels.push_back(to_string(p.category));
        groups.push_back(is_negated(p.category) ? 1 : 0);
    }
    const auto r = tsne_project(x, labels, cfg_.interpret.tsne);
    const std::string name = to_string(m);
    const auto dir = cfg_.output_dir / "reports";
    const auto csvp = dir / ("tsne_" + name + ".csv"), svgp = dir / ("tsne_" + name + ".svg"),
               jp = dir / ("tsne_" + name + ".json");
    const double sep2d = separation_statistic(r.coords, groups);
    const double sepjoint = separation_statistic(x, groups);
    const std::size_t ex_end = std::max<std::size_t>(cfg_.interpret.tsne.exaggeration_iterations, 1);
    ojson summary = {{"perplexity", r.perplexity},
                     {"kl_at_exaggeration_end", r.kl_after(ex_end)},
                     {"kl_final", r.kl_trace.back()},
                     {"separation_2d", sep2d},
                     {"separation_joint", sepjoint}};
    ojson doc = summary;
    doc["kl_trace"] = loss_json(r.kl_trace);
    write(csvp, r.to_csv());
    write(svgp, svg::tsne_scatter(r, name + ": t-SNE of eval prompt embeddings"));
    write(jp, doc.dump(2) + "\n");
    summary["csv_path"] = rel(csvp);
    summary["svg_path"] = rel(svgp);
    summary["json_path"] = rel(jp);
    return summary;
}

ojson Pipeline::run_all(bool force) {
    check_references(true);
    if (!force && fs::exists(report_path()))
        throw ConfigError("--force", "'" + report_path().string() + "' already exists; pass --force to overwrite");
    using clock = std::chrono::steady_clock;
    ojson timing = ojson::object();
    auto timed = [&](const std::string& stage, auto&& fn) {
        const auto t0 = clock::now();
        auto result = fn();
        timing[stage] = std::chrono::duration<double>(clock::now() - t0).count();
        return result;
    };
    const auto total0 = clock::now();

    ojson report;
    report["tool"] = {{"name", "neglab"}, {"version", kToolVersion}};
    report["config_hash"] = cfg_.hash();
    report["seed"] = cfg_.seed;
    report["data"] = timed("gen_data", [&] { return gen_data(force); });

    ojson models = ojson::object();
    models["base"] = timed("pretrain_base", [&] { return pretrain(); });
    models["con1"] = timed("finetune_con1", [&] { return finetune(ObjectiveKind::infonce); });
    models["con2"] = timed("finetune_con2", [&] { return finetune(ObjectiveKind::conclip); });
    for (auto m : kAllModels) {
        const std::string n = to_string(m);
        auto& e = models[n];
        e["eval"] = timed("eval_" + n, [&] { return eval(m); });
        e["attribution"] = timed("attribute_" + n, [&] { return attribute(m); });
        e["ablation"] = timed("ablate_" + n, [&] { return ablate_heads(m); });
        e["tsne"] = timed("tsne_" + n, [&] { return tsne(m); });
    }
    report["checkpoints"] = models;

    ojson frozen = {{"con1", models["con1"]["frozen_tower"]["unchanged"]},
                    {"con2", models["con2"]["frozen_tower"]["unchanged"]}};
    ojson summary = ojson::object();
    for (const char* key : {"negated_accuracy", "positive_accuracy"}) {
        summary[key] = ojson::object();
        for (auto m : kAllModels) summary[key][to_string(m)] = models[to_string(m)]["eval"][key];
    }
    summary["negation_attribution"] = ojson::object();
    summary["tsne_separation_2d"] = ojson::object();
    for (auto m : kAllModels) {
        summary["negation_attribution"][to_string(m)] = models[to_string(m)]["attribution"]["mean_negation_attribution"];
        summary["tsne_separation_2d"][to_string(m)] = models[to_string(m)]["tsne"]["separation_2d"];
    }
    summary["frozen_tower_unchanged"] = frozen;
    report["summary"] = summary;
    report["config"] = cfg_.to_json();
    timing["total"] = std::chrono::duration<double>(clock::now() - total0).count();
    report["timing"] = timing;

    validate_report_paths(report, cfg_.output_dir);
    write(report_path(), report.dump(2) + "\n");
    log("wrote " + report_path().string());
    return report;
}

void validate_report_paths(const ojson& report, const fs::path& root) {
    auto walk = [&](auto&& self, const ojson& j) -> void {
        if (j.is_object()) {
            for (auto it = j.begin(); it != j.end(); ++it) {
                const auto& k = it.key();
                const bool is_path = k == "path" || (k.size() > 5 && k.compare(k.size() - 5, 5, "_path") == 0);
                if (is_path && it.value().is_string()) {
                    const auto p = root / it.value().get<std::string>();
                    if (!fs::exists(p))
                        throw FormatError("run report references missing artifact '" + p.string() + "'");
                }
                self(self, it.value());
            }
        } else if (j.is_array()) {
            for (const auto& v : j) self(self, v);
        }
    };
    walk(walk, report);
}

ojson without_timing(ojson report) {
    report.erase("timing");
    return report;
}

} // namespace neglab
