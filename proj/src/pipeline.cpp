#include "gradshift/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

namespace gradshift {

namespace fs = std::filesystem;

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_string(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

std::uint64_t hash_matrix(const Eigen::MatrixXd& m, std::uint64_t h) {
    return fnv1a(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), h);
}

// Everything a stage loop needs, independent of DA / SSDA mode. The first
// n_source labeled rows are schedulable source samples; the rest (SSDA
// labeled targets) are sticky: always active with their true labels.
struct StagePools {
    Eigen::MatrixXd labeled_features;
    std::vector<int> labeled_labels;
    int n_source = 0;
    Eigen::MatrixXd target_features;
    bool target_raster = false;
    int num_classes = 0;
};

struct DomainCsvRow {
    std::string role;
    int index;
    int active;
    int pseudo;
};

void write_domain_csv(const IntermediateDomain& dom, const std::vector<int>& all_pseudo,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "role,index,active,pseudo_label\n";
    for (std::size_t i = 0; i < dom.source_active.size(); ++i)
        out << "source," << i << ',' << int(dom.source_active[i]) << ",-1\n";
    for (std::size_t i = 0; i < dom.target_active.size(); ++i)
        out << "target," << i << ',' << int(dom.target_active[i]) << ','
            << all_pseudo[i] << '\n';
}

void read_domain_csv(const std::string& path, IntermediateDomain* dom,
                     std::vector<int>* all_pseudo) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    std::getline(in, line);
    dom->source_active.clear();
    dom->target_active.clear();
    dom->target_pseudo_labels.clear();
    all_pseudo->clear();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string role, idx, act, pse;
        std::getline(ss, role, ',');
        std::getline(ss, idx, ',');
        std::getline(ss, act, ',');
        std::getline(ss, pse, ',');
        const int active = std::stoi(act);
        const int pseudo = std::stoi(pse);
        if (role == "source") {
            dom->source_active.push_back(static_cast<std::uint8_t>(active));
        } else {
            dom->target_active.push_back(static_cast<std::uint8_t>(active));
            dom->target_pseudo_labels.push_back(active ? pseudo : -1);
            all_pseudo->push_back(pseudo);
        }
    }
}

nlohmann::json stage_report_json(const StageReport& r) {
    nlohmann::json doc;
    doc["stage"] = r.stage;
    doc["active_source"] = r.active_source;
    doc["active_target"] = r.active_target;
    doc["target_accuracy"] =
        std::isfinite(r.target_accuracy) ? nlohmann::json(r.target_accuracy) : nlohmann::json();
    doc["pseudo_agreement"] = r.pseudo_agreement;
    doc["consecutive_a_distance"] = std::isfinite(r.consecutive_a_distance)
                                        ? nlohmann::json(r.consecutive_a_distance)
                                        : nlohmann::json();
    doc["wall_time_s"] = r.wall_time_s;
    return doc;
}

StageReport stage_report_from_json(const nlohmann::json& doc) {
    StageReport r;
    r.stage = doc.at("stage").get<int>();
    r.active_source = doc.at("active_source").get<int>();
    r.active_target = doc.at("active_target").get<int>();
    if (!doc.at("target_accuracy").is_null())
        r.target_accuracy = doc.at("target_accuracy").get<double>();
    r.pseudo_agreement = doc.at("pseudo_agreement").get<double>();
    if (!doc.at("consecutive_a_distance").is_null())
        r.consecutive_a_distance = doc.at("consecutive_a_distance").get<double>();
    r.wall_time_s = doc.at("wall_time_s").get<double>();
    return r;
}

std::uint64_t config_hash(const RunConfig& cfg) {
    nlohmann::json doc = run_config_to_json(cfg);
    doc.erase("checkpoint_dir");
    doc.erase("resume_from_stage");
    return hash_string(doc.dump());
}

std::uint64_t data_hash(const StagePools& pools) {
    std::uint64_t h = hash_matrix(pools.labeled_features, 0xcbf29ce484222325ULL);
    h = fnv1a(pools.labeled_labels.data(), pools.labeled_labels.size() * sizeof(int), h);
    h = hash_matrix(pools.target_features, h);
    return h;
}

// The gradual loop shared by DA and SSDA.
RunResult run_core(Classifier f0, const StagePools& pools, const RunConfig& cfg,
                   const std::vector<int>* eval_labels) {
    const int m_total = cfg.num_stages;
    const int n_src = pools.n_source;
    const int n_tgt = static_cast<int>(pools.target_features.rows());
    const int k_classes = pools.num_classes;
    const bool checkpointing = !cfg.checkpoint_dir.empty();

    RunResult result;
    result.config_echo = run_config_to_json(cfg);

    if (checkpointing) {
        fs::create_directories(cfg.checkpoint_dir);
        nlohmann::json meta;
        std::ostringstream ch, dh;
        ch << std::hex << config_hash(cfg);
        dh << std::hex << data_hash(pools);
        meta["config_hash"] = ch.str();
        meta["data_hash"] = dh.str();
        const std::string meta_path = cfg.checkpoint_dir + "/run_meta.json";
        if (cfg.resume_from_stage > 0) {
            std::ifstream in(meta_path);
            if (!in) throw StateError("resume: missing run_meta.json in " + cfg.checkpoint_dir);
            nlohmann::json prev;
            in >> prev;
            if (prev.at("config_hash") != meta["config_hash"] ||
                prev.at("data_hash") != meta["data_hash"])
                throw StateError("resume: checkpoint inputs do not match this run");
        } else {
            std::ofstream out(meta_path);
            out << meta.dump(2) << '\n';
        }
    }

    Classifier f = std::move(f0);
    std::vector<int> prev_pseudo =
        n_tgt > 0 ? pseudo_labels(f.forward(pools.target_features)) : std::vector<int>{};
    int start_stage = 1;

    if (cfg.resume_from_stage > 0) {
        require(checkpointing, "resume requires a checkpoint directory");
        require(cfg.resume_from_stage <= m_total, "resume stage beyond M");
        const std::string stage_dir =
            cfg.checkpoint_dir + "/stage_" + std::to_string(cfg.resume_from_stage);
        f = load(stage_dir + "/model.json");
        for (int m = 1; m <= cfg.resume_from_stage; ++m) {
            const std::string dir = cfg.checkpoint_dir + "/stage_" + std::to_string(m);
            IntermediateDomain dom;
            std::vector<int> all_pseudo;
            read_domain_csv(dir + "/domain.csv", &dom, &all_pseudo);
            dom.stage = m;
            result.domains.push_back(std::move(dom));
            if (m == cfg.resume_from_stage) prev_pseudo = all_pseudo;
            std::ifstream frag(dir + "/report_fragment.json");
            if (!frag) throw StateError("resume: missing report fragment for stage " +
                                        std::to_string(m));
            nlohmann::json doc;
            frag >> doc;
            result.stage_reports.push_back(stage_report_from_json(doc));
            result.stage_models.push_back(f);  // only the resumed stage's model is known
        }
        start_stage = cfg.resume_from_stage + 1;
    } else if (checkpointing) {
        fs::create_directories(cfg.checkpoint_dir + "/stage_0");
        save(f, cfg.checkpoint_dir + "/stage_0/model.json");
    }

    TrainConfig stage_cfg = cfg.train;
    stage_cfg.iterations = cfg.per_stage_iterations();

    for (int m = start_stage; m <= m_total; ++m) {
        const auto t_start = std::chrono::steady_clock::now();

        const Eigen::MatrixXd labeled_phi = f.features(pools.labeled_features);
        Eigen::MatrixXd net_probs(0, k_classes), sel_probs(0, k_classes),
            lab_probs(0, k_classes), target_phi(0, labeled_phi.cols());
        if (n_tgt > 0) {
            net_probs = f.forward(pools.target_features);
            target_phi = f.features(pools.target_features);
            sel_probs = net_probs;
            lab_probs = net_probs;
            if (cfg.ensemble_for_selection || cfg.ensemble_for_labeling) {
                const ClusterModel cm = fit_clusters(labeled_phi, pools.labeled_labels,
                                                     k_classes, target_phi);
                const Eigen::MatrixXd cluster_probs =
                    cluster_predict_batch(cm, target_phi, cfg.kernel);
                const PropagationGraph graph = build_graph(
                    labeled_phi, pools.labeled_labels, k_classes, target_phi, cfg.lambda);
                const Eigen::MatrixXd prop_scores =
                    graph.n() <= 4000 ? propagate_closed_form(graph)
                                      : propagate_iterative(graph, 1e-8, 500).scores;
                const int n_labeled = static_cast<int>(pools.labeled_features.rows());
                Eigen::MatrixXd enhanced(n_tgt, k_classes);
                for (int i = 0; i < n_tgt; ++i) {
                    const auto prop = propagation_predict(prop_scores, n_labeled + i);
                    enhanced.row(i) =
                        enhanced_indicator(net_probs.row(i).transpose(),
                                           cluster_probs.row(i).transpose(), prop.probs)
                            .transpose();
                }
                if (cfg.ensemble_for_selection) sel_probs = enhanced;
                if (cfg.ensemble_for_labeling) lab_probs = enhanced;
            }
        }

        // Target side: top-fraction selection over the chosen indicator.
        const int k_t = proportional_count(m, m_total, n_tgt);
        std::vector<std::uint8_t> target_active(n_tgt, 1);
        ScoreTable target_scores;
        if (n_tgt > 0) {
            target_scores = score_targets(sel_probs);
            switch (cfg.target_selection) {
                case SelectionPolicy::Ours:
                    target_active = select_top(target_scores, k_t);
                    break;
                case SelectionPolicy::Random:
                    target_active = random_indicator(n_tgt, k_t, derive_seed(cfg.seed, 2000 + m));
                    break;
                case SelectionPolicy::All:
                    break;  // all ones
            }
        }

        // Source side: prototype own-class probability from the plain model's pseudo labels.
        const int k_s = proportional_count(m_total - m, m_total, n_src);
        std::vector<std::uint8_t> source_active(n_src, 1);
        if (n_tgt > 0) {
            const Prototypes protos =
                prototypes_from(target_phi, pseudo_labels(net_probs), k_classes);
            std::vector<int> src_labels(pools.labeled_labels.begin(),
                                        pools.labeled_labels.begin() + n_src);
            const ScoreTable source_scores =
                score_sources(labeled_phi.topRows(n_src), src_labels, protos, cfg.kernel);
            switch (cfg.source_selection) {
                case SelectionPolicy::Ours:
                    source_active = select_top(source_scores, k_s);
                    break;
                case SelectionPolicy::Random:
                    source_active = random_indicator(n_src, k_s, derive_seed(cfg.seed, 3000 + m));
                    break;
                case SelectionPolicy::All:
                    break;
            }
        }

        // Pseudo labels frozen for the whole stage.
        const std::vector<int> frozen_pseudo =
            n_tgt > 0 ? pseudo_labels(lab_probs) : std::vector<int>{};

        IntermediateDomain dom;
        dom.stage = m;
        dom.source_active = source_active;
        dom.target_active = target_active;
        dom.target_pseudo_labels.assign(n_tgt, -1);
        for (int i = 0; i < n_tgt; ++i)
            if (target_active[i]) dom.target_pseudo_labels[i] = frozen_pseudo[i];

        // Batch spec: schedulable sources per indicator, sticky labeled rows
        // always on.
        WeightedBatchSpec spec;
        const int n_labeled_rows = static_cast<int>(pools.labeled_features.rows());
        for (int i = 0; i < n_labeled_rows; ++i) {
            spec.labeled_indices.push_back(i);
            spec.labeled_labels.push_back(pools.labeled_labels[i]);
            spec.labeled_weights.push_back(i < n_src ? source_active[i] : std::uint8_t{1});
        }
        for (int i = 0; i < n_tgt; ++i) {
            spec.pseudo_indices.push_back(i);
            spec.pseudo_labels.push_back(frozen_pseudo[i]);
            spec.pseudo_weights.push_back(target_active[i]);
        }

        const bool any_active = !spec.active_labeled().empty() || !spec.active_pseudo().empty();
        if (any_active) {
            TrainConfig it_cfg = stage_cfg;
            it_cfg.seed = derive_seed(cfg.seed, 1000 + m);
            const ScheduleWindow window{static_cast<double>(m - 1) / m_total,
                                        static_cast<double>(m) / m_total};
            f = train_stage(std::move(f), pools.labeled_features, pools.target_features,
                            pools.target_raster, spec, it_cfg, window);
        }

        StageReport report;
        report.stage = m;
        report.active_source = dom.active_source_count();
        report.active_target = dom.active_target_count();
        if (eval_labels && n_tgt > 0)
            report.target_accuracy = accuracy(f, pools.target_features, *eval_labels);
        if (n_tgt > 0) {
            int agree = 0;
            for (int i = 0; i < n_tgt; ++i)
                if (frozen_pseudo[i] == prev_pseudo[i]) ++agree;
            report.pseudo_agreement = static_cast<double>(agree) / n_tgt;
            prev_pseudo = frozen_pseudo;
        }
        report.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

        if (checkpointing) {
            const std::string dir = cfg.checkpoint_dir + "/stage_" + std::to_string(m);
            fs::create_directories(dir);
            save(f, dir + "/model.json");
            write_domain_csv(dom, n_tgt > 0 ? frozen_pseudo : std::vector<int>{},
                             dir + "/domain.csv");
            std::ofstream frag(dir + "/report_fragment.json");
            frag << stage_report_json(report).dump(2) << '\n';
        }

        result.domains.push_back(std::move(dom));
        result.stage_reports.push_back(report);
        result.stage_models.push_back(f);
    }

    result.final_model = f;
    if (eval_labels && n_tgt > 0)
        result.final_accuracy = accuracy(f, pools.target_features, *eval_labels);
    if (checkpointing) write_report(result, cfg.checkpoint_dir + "/report.json");
    return result;
}

}  // namespace

std::string to_string(SelectionPolicy p) {
    switch (p) {
        case SelectionPolicy::Ours: return "ours";
        case SelectionPolicy::Random: return "random";
        case SelectionPolicy::All: return "all";
    }
    return "ours";
}

SelectionPolicy selection_policy_from_string(const std::string& s) {
    if (s == "ours") return SelectionPolicy::Ours;
    if (s == "random") return SelectionPolicy::Random;
    if (s == "all") return SelectionPolicy::All;
    throw std::invalid_argument("unknown selection policy: " + s);
}

void RunConfig::validate() const {
    require(num_stages >= 1, "RunConfig: M must be >= 1");
    require(lambda >= 0.0, "RunConfig: lambda must be >= 0");
    require(train.iterations >= 1, "RunConfig: iterations must be >= 1");
    require(adapt_iterations >= 0, "RunConfig: adapt_iterations must be >= 0");
    require(resume_from_stage >= 0 && resume_from_stage <= num_stages,
            "RunConfig: resume stage out of range");
    for (int h : hidden_dims) require(h >= 1, "RunConfig: zero hidden width");
}

int RunConfig::per_stage_iterations() const {
    const int total = adapt_iterations > 0 ? adapt_iterations : train.iterations;
    return std::max(1, static_cast<int>(std::llround(static_cast<double>(total) / num_stages)));
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
    nlohmann::json doc;
    doc["M"] = cfg.num_stages;
    doc["mode"] = cfg.mode == RunMode::DA ? "da" : "ssda";
    doc["adapt_iterations"] = cfg.adapt_iterations;
    doc["ensemble_for_selection"] = cfg.ensemble_for_selection;
    doc["ensemble_for_labeling"] = cfg.ensemble_for_labeling;
    doc["selection_mode_target"] = to_string(cfg.target_selection);
    doc["selection_mode_source"] = to_string(cfg.source_selection);
    doc["lambda"] = cfg.lambda;
    doc["kernel"] = cfg.kernel == DistanceKernel::SoftmaxNegSq ? "softmax_neg_sq" : "student_exp";
    doc["seed"] = cfg.seed;
    doc["checkpoint_dir"] = cfg.checkpoint_dir;
    doc["resume_from_stage"] = cfg.resume_from_stage;
    doc["hidden_dims"] = cfg.hidden_dims;
    nlohmann::json train;
    train["eta0"] = cfg.train.eta0;
    train["alpha"] = cfg.train.alpha;
    train["beta"] = cfg.train.beta;
    train["momentum"] = cfg.train.momentum;
    train["batch_labeled"] = cfg.train.batch_labeled;
    train["unlabeled_ratio"] = cfg.train.unlabeled_ratio;
    train["iterations"] = cfg.train.iterations;
    train["augment_sigma"] = cfg.train.augment_sigma;
    train["weight_decay"] = cfg.train.weight_decay;
    doc["train"] = std::move(train);
    return doc;
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
    RunConfig cfg;
    if (doc.contains("M")) cfg.num_stages = doc.at("M").get<int>();
    if (doc.contains("mode"))
        cfg.mode = doc.at("mode").get<std::string>() == "ssda" ? RunMode::SSDA : RunMode::DA;
    if (doc.contains("adapt_iterations"))
        cfg.adapt_iterations = doc.at("adapt_iterations").get<int>();
    if (doc.contains("ensemble_for_selection"))
        cfg.ensemble_for_selection = doc.at("ensemble_for_selection").get<bool>();
    if (doc.contains("ensemble_for_labeling"))
        cfg.ensemble_for_labeling = doc.at("ensemble_for_labeling").get<bool>();
    if (doc.contains("selection_mode_target"))
        cfg.target_selection =
            selection_policy_from_string(doc.at("selection_mode_target").get<std::string>());
    if (doc.contains("selection_mode_source"))
        cfg.source_selection =
            selection_policy_from_string(doc.at("selection_mode_source").get<std::string>());
    if (doc.contains("lambda")) cfg.lambda = doc.at("lambda").get<double>();
    if (doc.contains("kernel"))
        cfg.kernel = doc.at("kernel").get<std::string>() == "student_exp"
                         ? DistanceKernel::StudentExp
                         : DistanceKernel::SoftmaxNegSq;
    if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("checkpoint_dir")) cfg.checkpoint_dir = doc.at("checkpoint_dir");
    if (doc.contains("resume_from_stage"))
        cfg.resume_from_stage = doc.at("resume_from_stage").get<int>();
    if (doc.contains("hidden_dims"))
        cfg.hidden_dims = doc.at("hidden_dims").get<std::vector<int>>();
    if (doc.contains("train")) {
        const auto& t = doc.at("train");
        if (t.contains("eta0")) cfg.train.eta0 = t.at("eta0").get<double>();
        if (t.contains("alpha")) cfg.train.alpha = t.at("alpha").get<double>();
        if (t.contains("beta")) cfg.train.beta = t.at("beta").get<double>();
        if (t.contains("momentum")) cfg.train.momentum = t.at("momentum").get<double>();
        if (t.contains("batch_labeled"))
            cfg.train.batch_labeled = t.at("batch_labeled").get<int>();
        if (t.contains("unlabeled_ratio"))
            cfg.train.unlabeled_ratio = t.at("unlabeled_ratio").get<int>();
        if (t.contains("iterations")) cfg.train.iterations = t.at("iterations").get<int>();
        if (t.contains("augment_sigma"))
            cfg.train.augment_sigma = t.at("augment_sigma").get<double>();
        if (t.contains("weight_decay"))
            cfg.train.weight_decay = t.at("weight_decay").get<double>();
    }
    cfg.train.seed = cfg.seed;
    return cfg;
}

nlohmann::json report_json(const RunResult& result) {
    nlohmann::json doc;
    doc["config"] = result.config_echo;
    doc["final_accuracy"] = std::isfinite(result.final_accuracy)
                                ? nlohmann::json(result.final_accuracy)
                                : nlohmann::json();
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& r : result.stage_reports) stages.push_back(stage_report_json(r));
    doc["stages"] = std::move(stages);
    return doc;
}

void write_report(const RunResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << report_json(result).dump(2) << '\n';
}

bool validate_against_schema(const nlohmann::json& doc, const nlohmann::json& schema,
                             std::string* error) {
    auto fail = [&](const std::string& msg) {
        if (error) *error = msg;
        return false;
    };
    if (schema.contains("type")) {
        auto matches = [&](const std::string& t) {
            if (t == "object") return doc.is_object();
            if (t == "array") return doc.is_array();
            if (t == "string") return doc.is_string();
            if (t == "number") return doc.is_number();
            if (t == "integer") return doc.is_number_integer();
            if (t == "boolean") return doc.is_boolean();
            if (t == "null") return doc.is_null();
            return false;
        };
        const auto& type = schema.at("type");
        bool ok = false;
        if (type.is_array()) {
            for (const auto& t : type) ok = ok || matches(t.get<std::string>());
        } else {
            ok = matches(type.get<std::string>());
        }
        if (!ok) return fail("type mismatch: expected " + type.dump() + ", got " + doc.dump());
    }
    if (schema.contains("enum")) {
        bool ok = false;
        for (const auto& v : schema.at("enum")) ok = ok || (v == doc);
        if (!ok) return fail("enum mismatch: " + doc.dump());
    }
    if (schema.contains("required")) {
        for (const auto& key : schema.at("required"))
            if (!doc.contains(key.get<std::string>()))
                return fail("missing required key " + key.get<std::string>());
    }
    if (schema.contains("properties") && doc.is_object()) {
        for (const auto& [key, sub] : schema.at("properties").items())
            if (doc.contains(key) && !validate_against_schema(doc.at(key), sub, error))
                return false;
    }
    if (schema.contains("items") && doc.is_array()) {
        for (const auto& item : doc)
            if (!validate_against_schema(item, schema.at("items"), error)) return false;
    }
    return true;
}

RunResult run_da(const LabeledSet& source, const UnlabeledSet& target, const RunConfig& cfg,
                 const std::vector<int>* eval_labels) {
    cfg.validate();
    source.validate();
    require(source.dim() == target.dim(), "run_da: feature dimension mismatch");
    require(cfg.mode == RunMode::DA, "run_da: config mode is not DA");
    if (eval_labels)
        require(static_cast<int>(eval_labels->size()) == target.n(),
                "run_da: eval label count mismatch");

    StagePools pools;
    pools.labeled_features = source.features;
    pools.labeled_labels = source.labels;
    pools.n_source = source.n();
    pools.target_features = target.features;
    pools.target_raster = target.raster;
    pools.num_classes = source.num_classes;

    std::vector<int> dims;
    dims.push_back(source.dim());
    for (int h : cfg.hidden_dims) dims.push_back(h);
    dims.push_back(source.num_classes);
    Classifier f0 = Classifier::init(dims, derive_seed(cfg.seed, 1));
    TrainConfig src_cfg = cfg.train;
    src_cfg.seed = derive_seed(cfg.seed, 2);
    f0 = train_source(std::move(f0), source, src_cfg);
    return run_core(std::move(f0), pools, cfg, eval_labels);
}

RunResult run_ssda(const LabeledSet& source, const SsdaSplit& split, const RunConfig& cfg) {
    cfg.validate();
    source.validate();
    require(cfg.mode == RunMode::SSDA, "run_ssda: config mode is not SSDA");
    require(split.labels_per_class >= 1, "run_ssda: labels_per_class must be >= 1");
    split.labeled_target.validate();
    require(source.dim() == split.labeled_target.dim(), "run_ssda: dimension mismatch");

    StagePools pools;
    const int n_src = source.n();
    const int n_lab_tgt = split.labeled_target.n();
    pools.labeled_features.resize(n_src + n_lab_tgt, source.dim());
    pools.labeled_features.topRows(n_src) = source.features;
    pools.labeled_features.bottomRows(n_lab_tgt) = split.labeled_target.features;
    pools.labeled_labels = source.labels;
    pools.labeled_labels.insert(pools.labeled_labels.end(), split.labeled_target.labels.begin(),
                                split.labeled_target.labels.end());
    pools.n_source = n_src;
    pools.target_features = split.unlabeled_target.features;
    pools.target_raster = split.unlabeled_target.raster;
    pools.num_classes = source.num_classes;

    // Stage 0: the pre-given intermediate domain, source plus labeled target.
    LabeledSet pre_given;
    pre_given.features = pools.labeled_features;
    pre_given.labels = pools.labeled_labels;
    pre_given.num_classes = source.num_classes;
    pre_given.raster = source.raster;

    std::vector<int> dims;
    dims.push_back(source.dim());
    for (int h : cfg.hidden_dims) dims.push_back(h);
    dims.push_back(source.num_classes);
    Classifier f0 = Classifier::init(dims, derive_seed(cfg.seed, 1));
    TrainConfig src_cfg = cfg.train;
    src_cfg.seed = derive_seed(cfg.seed, 2);
    f0 = train_source(std::move(f0), pre_given, src_cfg);
    const std::vector<int>* eval =
        split.unlabeled_labels.empty() ? nullptr : &split.unlabeled_labels;
    return run_core(std::move(f0), pools, cfg, eval);
}

std::vector<AblationArm> default_ablation_arms() {
    using P = SelectionPolicy;
    return {
        {"full", P::Ours, P::Ours, true, true},
        {"sel_t_off", P::All, P::Ours, true, true},
        {"sel_t_random", P::Random, P::Ours, true, true},
        {"sel_s_off", P::Ours, P::All, true, true},
        {"sel_s_random", P::Ours, P::Random, true, true},
        {"enh_off", P::Ours, P::Ours, false, false},
        {"lab_enh_off", P::Ours, P::Ours, true, false},
    };
}

std::vector<AblationRow> run_ablation_grid(const LabeledSet& source, const UnlabeledSet& target,
                                           const std::vector<int>& eval_labels,
                                           const RunConfig& base_cfg,
                                           const std::vector<AblationArm>& arms,
                                           const std::vector<std::uint64_t>& seeds, int jobs) {
    require(!arms.empty() && !seeds.empty(), "run_ablation_grid: empty arms or seeds");
    jobs = std::max(1, jobs);
    struct Task {
        AblationArm arm;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (const auto& arm : arms)
        for (auto seed : seeds) tasks.push_back({arm, seed});

    std::vector<AblationRow> rows(tasks.size());
    auto run_one = [&](std::size_t i) {
        const Task& t = tasks[i];
        RunConfig cfg = base_cfg;
        cfg.target_selection = t.arm.target_selection;
        cfg.source_selection = t.arm.source_selection;
        cfg.ensemble_for_selection = t.arm.ensemble_for_selection;
        cfg.ensemble_for_labeling = t.arm.ensemble_for_labeling;
        cfg.seed = t.seed;
        cfg.train.seed = t.seed;
        if (!base_cfg.checkpoint_dir.empty())
            cfg.checkpoint_dir =
                base_cfg.checkpoint_dir + "/" + t.arm.name + "_seed" + std::to_string(t.seed);
        const RunResult res = run_da(source, target, cfg, &eval_labels);
        rows[i] = AblationRow{t.arm.name,
                              t.arm.target_selection,
                              t.arm.source_selection,
                              t.arm.ensemble_for_selection,
                              t.arm.ensemble_for_labeling,
                              t.seed,
                              res.final_accuracy};
    };
    if (jobs == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_one(i);
    } else {
        std::size_t next = 0;
        while (next < tasks.size()) {
            std::vector<std::future<void>> batch;
            for (int j = 0; j < jobs && next < tasks.size(); ++j, ++next)
                batch.push_back(std::async(std::launch::async, run_one, next));
            for (auto& fut : batch) fut.get();
        }
    }
    return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "sel_t,sel_s,sel_enh,lab_enh,seed,accuracy\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.accuracy);
        out << to_string(r.target_selection) << ',' << to_string(r.source_selection) << ','
            << (r.ensemble_for_selection ? 1 : 0) << ',' << (r.ensemble_for_labeling ? 1 : 0)
            << ',' << r.seed << ',' << buf << '\n';
    }
}

}  // namespace gradshift
