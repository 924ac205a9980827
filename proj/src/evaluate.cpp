#include "mmfuse/evaluate.hpp"

#include "json.hpp"
#include "mmfuse/error.hpp"

namespace mmfuse {

using json = nlohmann::ordered_json;

EvalResult evaluate(TrainedModel& model, std::span<const FeatureBundle> test, const TtaConfig* tta,
                    std::uint64_t seed) {
    if (test.empty()) throw ArgumentError("evaluation split is empty");
    if (tta) tta->validate();
    EvalResult r;
    r.tta = tta != nullptr;
    const Rng tta_root = Rng(seed).split("tta");
    std::vector<int> labels, preds;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Sample s = model.prepare(test[i]);
        Prediction p;
        if (tta) {
            Rng rng = tta_root.split(i);
            p = tta_predict(model, s, *tta, rng);
            r.tta_skipped += p.tta_skipped;
        } else {
            p.id = s.id;
            p.label = s.label;
            p.prob = predict_one(model.params, model.model, s);
            p.members = {p.prob};
            p.pred = decide(p.prob);
        }
        labels.push_back(p.label);
        preds.push_back(p.pred);
        r.predictions.push_back(std::move(p));
    }
    r.metrics = compute_metrics(labels, preds);
    return r;
}

std::string eval_json(const EvalResult& r, const std::string& config_json, bool verbose) {
    const MetricsReport& m = r.metrics;
    json classes = json::array();
    for (int c = 0; c < 2; ++c) {
        const ClassMetrics& k = m.per_class[static_cast<std::size_t>(c)];
        classes.push_back({{"class", c},
                           {"precision", k.precision},
                           {"recall", k.recall},
                           {"f1", k.f1},
                           {"tp", k.tp},
                           {"fp", k.fp},
                           {"fn", k.fn},
                           {"tn", k.tn}});
    }
    json preds = json::array();
    for (const auto& p : r.predictions) {
        json e = {{"id", p.id}, {"label", p.label}, {"prob", p.prob}, {"pred", p.pred}};
        if (r.tta) {
            e["tta_skipped"] = p.tta_skipped;
            e["members"] = p.members;
            if (verbose) {
                json sims = json::array();
                for (const auto& s : p.similarity) {
                    sims.push_back({{"tokens", s[0]}, {"regions", s[1]}, {"pair_txt", s[2]}, {"pair_img", s[3]}});
                }
                e["similarity"] = std::move(sims);
            }
        }
        preds.push_back(std::move(e));
    }
    json doc;
    doc["config"] = config_json.empty() ? json::object() : json::parse(config_json);
    doc["metrics"] = {{"n", m.n},
                      {"accuracy", m.accuracy},
                      {"macro_f1", m.macro_f1},
                      {"classes", classes},
                      {"undefined", m.undefined}};
    doc["tta"] = {{"enabled", r.tta}, {"skipped", r.tta_skipped}};
    doc["predictions"] = std::move(preds);
    return doc.dump(2) + "\n";
}

} // namespace mmfuse
