#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "gate/harness/img2img.hpp"
#include "gate/metric/shift.hpp"

namespace gate::harness {

enum class Verdict { helps, no_effect, hurts };

std::string verdict_to_string(Verdict v);

struct GateProtocol {
    Img2ImgParams generation;       // identical seed/steps/strength for both runs
    double margin = 0.02;           // similarity margin for the verdict
    std::string base_prompt;        // prompt of the technique-off reference run
};

// Evidence for one technique evaluation: the technique-off reference
// generation, the technique-on candidate, similarity of each to the input,
// and the verdict those numbers imply.
struct GateReport {
    store::TechniqueCombo technique;
    core::Image input_image;
    core::Image reference_image;
    core::Image candidate_image;
    double strength = 0.0;
    int steps = 0;
    uint64_t seed = 0;
    double candidate_similarity = 0.0;  // vs input
    double reference_similarity = 0.0;  // vs input
    double margin = 0.0;
    std::optional<metric::ShiftScoreReport> candidate_feature_score;
    std::optional<metric::ShiftScoreReport> reference_feature_score;
    Verdict verdict = Verdict::no_effect;
};

// Verdict from recorded similarity evidence alone.
Verdict decide_verdict(double candidate_similarity, double reference_similarity, double margin);

// Runs the paired generations (technique off, then on) with identical
// parameters and assigns the verdict.
GateReport evaluate_technique(Img2ImgRunner& runner, const core::Image& input,
                              const store::TechniqueCombo& combo, const GateProtocol& protocol);

// Side-by-side [input | reference | candidate] grid plus a JSON record.
void write_report(const GateReport& report, const std::filesystem::path& dir,
                  const std::string& stem);
GateReport load_report(const std::filesystem::path& json_path);

}  // namespace gate::harness
