// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0

#include "neglab/pipeline/config.hpp"

#include <fstream>
#include <set>

namespace neglab {

namespace {

using nlohmann::json;

/// One JSON object section; remembers which keys were consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a JSON object");
    }

    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    bool has(const std::string& k) {
        seen_.insert(k);
        return j_.contains(k);
    }

    template <class T>
    void read(const std::string& k, T& out) {
        if (!has(k)) return;
        try {
            out = j_.at(k).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(key(k), "has the wrong type (got " + std::string(j_.at(k).type_name()) + ")");
        }
    }

    void read_count(const std::string& k, std::size_t& out) {
        if (!has(k)) return;
        const auto& v = j_.at(k);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            throw ConfigError(key(k), "must be a non-negative integer");
        out = v.get<std::size_t>();
    }

    Section child(const std::string& k) {
        seen_.insert(k);
        return Section(j_.at(k), key(k));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(key(it.key()), "unknown key");
    }

    void check(bool ok, const std::string& k, const std::string& what) const {
        if (!ok) throw ConfigError(key(k), what);
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_gen(Section s, GenConfig& g) {
    s.read_count("joint_dim", g.joint_dim);
    s.read_count("n_train_images", g.n_train_images);
    s.read_count("n_test_images", g.n_test_images);
    s.read("class_balance", g.class_balance);
    s.read("prototype_angle_deg", g.prototype_angle_deg);
    s.read("noise_sigma", g.noise_sigma);
    s.read_count("prompts_per_category", g.prompts_per_category);
    s.read_count("eval_prompts", g.eval_prompts);
    s.finish();
    s.check(g.joint_dim >= 2, "joint_dim", "must be at least 2");
    s.check(g.class_balance > 0 && g.class_balance < 1, "class_balance", "must lie in (0, 1)");
    s.check(g.prototype_angle_deg > 0 && g.prototype_angle_deg <= 180, "prototype_angle_deg", "must lie in (0, 180]");
    s.check(g.noise_sigma >= 0, "noise_sigma", "must be non-negative");
    s.check(g.prompts_per_category >= 1, "prompts_per_category", "must be at least 1");
    s.check(g.eval_prompts >= 4, "eval_prompts", "must be at least 4");
    try {
        g.validate();
    } catch (const ContractViolation& e) {
        throw ConfigError(s.key(""), e.what());
    }
}

void read_encoder(Section s, EncoderConfig& e, std::size_t joint_dim) {
    s.read_count("num_layers", e.num_layers);
    s.read_count("num_heads", e.num_heads);
    s.read_count("model_width", e.model_width);
    s.read_count("context_length", e.context_length);
    std::size_t jd = joint_dim;
    s.read_count("joint_dim", jd);
    s.read("causal_mask", e.causal_mask);
    s.finish();
    s.check(jd == joint_dim, "joint_dim", "must equal gen.joint_dim (" + std::to_string(joint_dim) + ")");
    s.check(e.num_layers >= 1, "num_layers", "must be at least 1");
    s.check(e.num_heads >= 1, "num_heads", "must be at least 1");
    s.check(e.model_width % std::max<std::size_t>(e.num_heads, 1) == 0 && e.model_width > 0, "model_width",
            "must be a positive multiple of num_heads");
    s.check(e.context_length >= 3, "context_length", "must be at least 3");
}

void read_train(Section s, TrainConfig& t, std::optional<std::filesystem::path>* quadruplets) {
    if (s.has("objective")) {
        std::string kind;
        s.read("objective", kind);
        try {
            t.objective.kind = objective_from_string(kind);
        } catch (const ContractViolation& e) {
            throw ConfigError(s.key("objective"), e.what());
        }
    }
    s.read("temperature", t.objective.temperature);
    s.read("include_in_batch_negatives_in_conclip", t.objective.include_in_batch_negatives_in_conclip);
    s.read("symmetric", t.objective.symmetric);
    s.read("learning_rate", t.learning_rate);
    s.read_count("epochs", t.epochs);
    s.read_count("batch_size", t.batch_size);
    s.read("shuffle", t.shuffle);
    if (s.has("adamw")) {
        auto a = s.child("adamw");
        a.read("beta1", t.adamw.beta1);
        a.read("beta2", t.adamw.beta2);
        a.read("eps", t.adamw.eps);
        a.read("weight_decay", t.adamw.weight_decay);
        a.finish();
        a.check(t.adamw.beta1 >= 0 && t.adamw.beta1 < 1, "beta1", "must lie in [0, 1)");
        a.check(t.adamw.beta2 >= 0 && t.adamw.beta2 < 1, "beta2", "must lie in [0, 1)");
        a.check(t.adamw.eps > 0, "eps", "must be positive");
        a.check(t.adamw.weight_decay >= 0, "weight_decay", "must be non-negative");
    }
    if (quadruplets && s.has("quadruplets")) {
        std::string p;
        s.read("quadruplets", p);
        s.check(!p.empty(), "quadruplets", "must be a non-empty path");
        *quadruplets = p;
    }
    s.finish();
    s.check(t.objective.temperature > 0, "temperature", "must be positive");
    s.check(std::isfinite(t.learning_rate) && t.learning_rate >= 0, "learning_rate", "must be non-negative");
    s.check(t.epochs >= 1, "epochs", "must be at least 1");
    s.check(t.batch_size >= (t.objective.kind == ObjectiveKind::infonce ? 2u : 1u), "batch_size",
            "must be at least 2 for infonce and 1 for conclip");
}

json train_json(const TrainConfig& t) {
    json j = t.to_json();
    j.erase("seed");
    return j;
}

} // namespace

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    c.gen.prompts_per_category = 58;
    c.base_train.learning_rate = 3e-4;
    c.base_train.epochs = 30;
    c.con1_train.learning_rate = 4e-4;
    c.con2_train.objective.kind = ObjectiveKind::conclip;
    c.con2_train.learning_rate = 2e-3;
    c.quadruplets = "data/quadruplets.csv";
    c.apply_seed(c.seed);
    return c;
}

void ExperimentConfig::apply_seed(std::uint64_t s) {
    seed = s;
    gen.seed = s;
    encoder.init_seed = s;
    encoder.joint_dim = gen.joint_dim;
    base_train.seed = s;
    con1_train.seed = s + 1;
    con2_train.seed = s + 2;
    interpret.tsne.seed = s;
}

ExperimentConfig ExperimentConfig::from_json(const json& doc, std::optional<std::uint64_t> seed_override) {
    ExperimentConfig c = defaults();
    Section root(doc, "");
    if (root.has("seed")) {
        if (!doc.at("seed").is_number_integer() || doc.at("seed").get<long long>() < 0)
            throw ConfigError("seed", "must be a non-negative integer");
        c.seed = doc.at("seed").get<std::uint64_t>();
    }
    if (root.has("output_dir")) {
        std::string p;
        root.read("output_dir", p);
        root.check(!p.empty(), "output_dir", "must be a non-empty path");
        c.output_dir = p;
    }
    if (root.has("gen")) read_gen(root.child("gen"), c.gen);
    if (root.has("encoder")) read_encoder(root.child("encoder"), c.encoder, c.gen.joint_dim);
    c.encoder.joint_dim = c.gen.joint_dim;
    if (root.has("base_train")) read_train(root.child("base_train"), c.base_train, nullptr);
    if (root.has("con1_train")) read_train(root.child("con1_train"), c.con1_train, nullptr);
    if (root.has("con2_train")) {
        c.quadruplets.reset();
        read_train(root.child("con2_train"), c.con2_train, &c.quadruplets);
    }
    if (c.base_train.objective.kind != ObjectiveKind::infonce)
        throw ConfigError("base_train.objective", "base pretraining uses infonce");
    if (c.con1_train.objective.kind != ObjectiveKind::infonce)
        throw ConfigError("con1_train.objective", "CON1 fine-tuning uses infonce");
    if (c.con2_train.objective.kind != ObjectiveKind::conclip)
        throw ConfigError("con2_train.objective", "CON2 fine-tuning uses conclip");
    if (root.has("eval")) {
        auto e = root.child("eval");
        e.read_count("k", c.eval.k);
        if (e.has("criterion")) {
            std::string crit;
            e.read("criterion", crit);
            try {
                c.eval.criterion = hit_criterion_from_string(crit);
            } catch (const ContractViolation& ex) {
                throw ConfigError(e.key("criterion"), ex.what());
            }
        }
        e.read("rankings_csv", c.eval.rankings_csv);
        e.finish();
        e.check(c.eval.k >= 1, "k", "must be at least 1");
        e.check(c.eval.k <= c.gen.n_test_images, "k", "exceeds gen.n_test_images");
    }
    if (root.has("interpret")) {
        auto in = root.child("interpret");
        if (in.has("tsne")) {
            auto t = in.child("tsne");
            auto& ts = c.interpret.tsne;
            t.read("perplexity", ts.perplexity);
            t.read_count("iterations", ts.iterations);
            t.read("learning_rate", ts.learning_rate);
            t.read("exaggeration", ts.exaggeration);
            t.read_count("exaggeration_iterations", ts.exaggeration_iterations);
            t.read("initial_momentum", ts.initial_momentum);
            t.read("final_momentum", ts.final_momentum);
            t.read_count("momentum_switch", ts.momentum_switch);
            t.finish();
            t.check(ts.perplexity >= 2, "perplexity", "must be at least 2");
            t.check(ts.perplexity < static_cast<double>(c.gen.eval_prompts), "perplexity",
                    "must be below the number of projected prompts (gen.eval_prompts)");
            t.check(ts.iterations >= 250, "iterations", "must be at least 250");
            t.check(ts.learning_rate > 0, "learning_rate", "must be positive");
            t.check(ts.exaggeration >= 1, "exaggeration", "must be at least 1");
            t.check(ts.exaggeration_iterations <= ts.iterations, "exaggeration_iterations", "exceeds iterations");
        }
        in.read("ablation_prompt", c.interpret.ablation_prompt);
        in.read("ablation_image", c.interpret.ablation_image);
        in.read("averaged_ablation", c.interpret.averaged_ablation);
        in.finish();
        in.check(!c.interpret.ablation_prompt.empty(), "ablation_prompt", "must be non-empty");
    }
    root.finish();
    c.apply_seed(seed_override.value_or(c.seed));
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("--config", "'" + path.string() + "' is not valid JSON: " + e.what());
    }
    auto cfg = from_json(doc, seed_override);
    if (cfg.output_dir.is_relative()) cfg.output_dir = path.parent_path() / cfg.output_dir;
    return cfg;
}

json ExperimentConfig::to_json() const {
    json con2 = train_json(con2_train);
    con2["quadruplets"] = quadruplets ? json(quadruplets->generic_string()) : json(nullptr);
    return {
        {"seed", seed},
        {"gen",
         {{"joint_dim", gen.joint_dim},
          {"n_train_images", gen.n_train_images},
          {"n_test_images", gen.n_test_images},
          {"class_balance", gen.class_balance},
          {"prototype_angle_deg", gen.prototype_angle_deg},
          {"noise_sigma", gen.noise_sigma},
          {"prompts_per_category", gen.prompts_per_category},
          {"eval_prompts", gen.eval_prompts}}},
        {"encoder",
         {{"num_layers", encoder.num_layers},
          {"num_heads", encoder.num_heads},
          {"model_width", encoder.model_width},
          {"context_length", encoder.context_length},
          {"joint_dim", encoder.joint_dim},
          {"causal_mask", encoder.causal_mask}}},
        {"base_train", train_json(base_train)},
        {"con1_train", train_json(con1_train)},
        {"con2_train", con2},
        {"eval", {{"k", eval.k}, {"criterion", to_string(eval.criterion)}, {"rankings_csv", eval.rankings_csv}}},
        {"interpret",
         {{"tsne",
           {{"perplexity", interpret.tsne.perplexity},
            {"iterations", interpret.tsne.iterations},
            {"learning_rate", interpret.tsne.learning_rate},
            {"exaggeration", interpret.tsne.exaggeration},
            {"exaggeration_iterations", interpret.tsne.exaggeration_iterations},
            {"initial_momentum", interpret.tsne.initial_momentum},
            {"final_momentum", interpret.tsne.final_momentum},
            {"momentum_switch", interpret.tsne.momentum_switch}}},
          {"ablation_prompt", interpret.ablation_prompt},
          {"ablation_image", interpret.ablation_image},
          {"averaged_ablation", interpret.averaged_ablation}}},
    };
}

std::string ExperimentConfig::hash() const { return bin::fnv1a_hex(to_json().dump()); }

} // namespace neglab
