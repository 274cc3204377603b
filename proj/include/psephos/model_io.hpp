#pragma once

#include <json.hpp>

#include "psephos/bias.hpp"
#include "psephos/threshold.hpp"

namespace psephos {

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json threshold_model_to_json(const ThresholdModel& model) {
    nlohmann::json entries = nlohmann::json::array();
    // curves can be shared between candidate counts; serialize each once
    std::vector<const BoundaryCurve*> seen;
    for (const auto& [n, curve] : model.curves()) {
        (void)n;
        if (std::find(seen.begin(), seen.end(), curve.get()) != seen.end()) continue;
        seen.push_back(curve.get());
        entries.push_back({{"n", curve->n},
                           {"covered_n", curve->covered_n},
                           {"knots", curve->spline.knots()},
                           {"coefficients", curve->spline.coefs()},
                           {"r_insample", curve->r_insample},
                           {"r_holdout", curve->r_holdout},
                           {"points", curve->points},
                           {"c", curve->c_reg},
                           {"interior_knots", curve->interior_knots},
                           {"seed", curve->seed}});
    }
    return {{"curves", entries}};
}

inline ThresholdModel threshold_model_from_json(const nlohmann::json& j) {
    ThresholdModel model;
    for (const auto& e : j.at("curves")) {
        auto curve = std::make_shared<BoundaryCurve>();
        curve->n = e.at("n").get<int>();
        curve->covered_n = e.at("covered_n").get<std::vector<int>>();
        curve->spline = CubicBSpline(e.at("knots").get<std::vector<double>>(),
                                     e.at("coefficients").get<std::vector<double>>());
        curve->r_insample = e.at("r_insample").get<double>();
        curve->r_holdout = e.at("r_holdout").get<double>();
        curve->points = e.at("points").get<std::size_t>();
        curve->c_reg = e.at("c").get<double>();
        curve->interior_knots = e.at("interior_knots").get<int>();
        curve->seed = e.at("seed").get<std::uint64_t>();
        model.add_curve(std::move(curve));
    }
    return model;
}

inline nlohmann::json bandwidth_spec_to_json(const BandwidthSpec& bw) {
    return {{"scheme", to_string(bw.scheme)}, {"h0", bw.h0}, {"k", bw.k}};
}

inline BandwidthSpec bandwidth_spec_from_json(const nlohmann::json& j) {
    BandwidthSpec bw;
    bw.scheme = bandwidth_scheme_from_string(j.at("scheme").get<std::string>());
    bw.h0 = j.at("h0").get<std::vector<double>>();
    bw.k = j.at("k").get<int>();
    return bw;
}

inline nlohmann::json seats_votes_to_json(const SeatsVotesModel& model) {
    nlohmann::json strata = nlohmann::json::array();
    for (const auto& s : model.strata) {
        const FeatureMatrix& data = s.model.data();
        std::vector<double> v(data.rows), t(data.rows);
        for (std::size_t i = 0; i < data.rows; ++i) {
            v[i] = data.at(i, 0);
            t[i] = data.at(i, 1);
        }
        strata.push_back({{"c", s.c},
                          {"rows", s.rows},
                          {"criterion_value", s.criterion_value},
                          {"bandwidth", bandwidth_spec_to_json(s.bw)},
                          {"v", v},
                          {"t", t},
                          {"s", data.response}});
    }
    return {{"k0", model.k0}, {"strata", strata}};
}

inline SeatsVotesModel seats_votes_from_json(const nlohmann::json& j) {
    SeatsVotesModel model;
    model.k0 = j.at("k0").get<int>();
    for (const auto& e : j.at("strata")) {
        SeatsVotesModel::Stratum s;
        s.c = e.at("c").get<int>();
        s.rows = e.at("rows").get<std::size_t>();
        s.criterion_value = e.at("criterion_value").get<double>();
        s.bw = bandwidth_spec_from_json(e.at("bandwidth"));
        auto v = e.at("v").get<std::vector<double>>();
        auto t = e.at("t").get<std::vector<double>>();
        auto resp = e.at("s").get<std::vector<double>>();
        FeatureMatrix m;
        m.rows = v.size();
        m.dims = 2;
        for (std::size_t i = 0; i < v.size(); ++i) {
            m.x.push_back(v[i]);
            m.x.push_back(t[i]);
        }
        m.response = std::move(resp);
        s.model = KernelModel(std::move(m), s.bw);
        model.strata.push_back(std::move(s));
    }
    return model;
}

// Versioned bundle with both models plus provenance.
inline nlohmann::json model_bundle_to_json(const ThresholdModel& thresholds, const SeatsVotesModel& sv,
                                           std::uint64_t seed, const nlohmann::json& config_echo) {
    return {{"format_version", kModelFormatVersion},
            {"seed", seed},
            {"config", config_echo},
            {"threshold_model", threshold_model_to_json(thresholds)},
            {"seats_votes_model", seats_votes_to_json(sv)}};
}

struct ModelBundle {
    ThresholdModel thresholds;
    SeatsVotesModel seats_votes;
    std::uint64_t seed = 0;
};

inline ModelBundle model_bundle_from_json(const nlohmann::json& j) {
    int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
        throw ParseError("model bundle format version " + std::to_string(version) + " is not supported");
    ModelBundle b;
    b.thresholds = threshold_model_from_json(j.at("threshold_model"));
    b.seats_votes = seats_votes_from_json(j.at("seats_votes_model"));
    b.seed = j.at("seed").get<std::uint64_t>();
    return b;
}

}  // namespace psephos
