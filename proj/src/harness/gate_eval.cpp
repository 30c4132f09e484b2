#include "gate/harness/gate_eval.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

#include "gate/harness/ssim.hpp"
#include "gate/store/npz.hpp"

namespace gate::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::string verdict_to_string(Verdict v) {
    switch (v) {
        case Verdict::helps: return "helps";
        case Verdict::no_effect: return "no_effect";
        case Verdict::hurts: return "hurts";
    }
    return "no_effect";
}

Verdict decide_verdict(double candidate_similarity, double reference_similarity, double margin) {
    const double gain = candidate_similarity - reference_similarity;
    if (gain > margin) return Verdict::helps;
    if (gain < -margin) return Verdict::hurts;
    return Verdict::no_effect;
}

GateReport evaluate_technique(Img2ImgRunner& runner, const core::Image& input,
                              const store::TechniqueCombo& combo, const GateProtocol& protocol) {
    combo.validate();
    GateReport r;
    r.technique = combo;
    r.input_image = input;
    r.strength = protocol.generation.strength;
    r.steps = protocol.generation.steps;
    r.seed = protocol.generation.seed;
    r.margin = protocol.margin;

    const store::TechniqueCombo off = store::TechniqueCombo::all_off(combo.combo_id + "__reference", "");
    r.reference_image = runner.run(input, protocol.base_prompt, off, protocol.generation);
    r.candidate_image = runner.run(input, protocol.base_prompt, combo, protocol.generation);

    r.reference_similarity = ssim_luminance(r.reference_image, input);
    r.candidate_similarity = ssim_luminance(r.candidate_image, input);
    r.verdict = decide_verdict(r.candidate_similarity, r.reference_similarity, r.margin);
    return r;
}

namespace {

json combo_to_json(const store::TechniqueCombo& c) {
    json j;
    j["combo_id"] = c.combo_id;
    j["prompt_source"] = store::prompt_source_to_string(c.prompt_source);
    j["prompt_text"] = c.prompt_text;
    j["use_controlnet"] = c.use_controlnet;
    j["use_lora"] = c.use_lora;
    if (c.lora_id) j["lora_id"] = *c.lora_id;
    j["cfg_scale"] = c.cfg_scale;
    if (c.denoise_from) j["denoise_from"] = *c.denoise_from;
    return j;
}

store::TechniqueCombo combo_from_json(const json& j) {
    store::TechniqueCombo c;
    c.combo_id = j.at("combo_id").get<std::string>();
    c.prompt_source = store::prompt_source_from_string(j.at("prompt_source").get<std::string>());
    c.prompt_text = j.at("prompt_text").get<std::string>();
    c.use_controlnet = j.at("use_controlnet").get<bool>();
    c.use_lora = j.at("use_lora").get<bool>();
    if (j.contains("lora_id")) c.lora_id = j.at("lora_id").get<std::string>();
    c.cfg_scale = j.at("cfg_scale").get<double>();
    if (j.contains("denoise_from")) c.denoise_from = j.at("denoise_from").get<int>();
    return c;
}

json score_to_json(const metric::ShiftScoreReport& s) {
    return json{{"diff", s.diff},
                {"diff_anchor", s.diff_anchor},
                {"score", s.score},
                {"ref_id", s.ref_id},
                {"anchor_id", s.anchor_id}};
}

metric::ShiftScoreReport score_from_json(const json& j) {
    metric::ShiftScoreReport s;
    s.diff = j.at("diff").get<double>();
    s.diff_anchor = j.at("diff_anchor").get<double>();
    s.score = j.at("score").get<double>();
    s.ref_id = j.at("ref_id").get<std::string>();
    s.anchor_id = j.at("anchor_id").get<std::string>();
    return s;
}

}  // namespace

void write_report(const GateReport& report, const fs::path& dir, const std::string& stem) {
    fs::create_directories(dir);
    const fs::path grid_path = dir / (stem + "_grid.png");
    const fs::path input_path = dir / (stem + "_input.png");
    const fs::path ref_path = dir / (stem + "_reference.png");
    const fs::path cand_path = dir / (stem + "_candidate.png");
    core::save_image(core::hstack_images({report.input_image, report.reference_image, report.candidate_image}),
                     grid_path);
    core::save_image(report.input_image, input_path);
    core::save_image(report.reference_image, ref_path);
    core::save_image(report.candidate_image, cand_path);

    json j;
    j["technique"] = combo_to_json(report.technique);
    j["strength"] = report.strength;
    j["steps"] = report.steps;
    j["seed"] = report.seed;
    j["margin"] = report.margin;
    j["candidate_similarity"] = report.candidate_similarity;
    j["reference_similarity"] = report.reference_similarity;
    j["verdict"] = verdict_to_string(report.verdict);
    j["images"] = {{"grid", grid_path.string()},
                   {"input", input_path.string()},
                   {"reference", ref_path.string()},
                   {"candidate", cand_path.string()}};
    if (report.candidate_feature_score) {
        j["candidate_feature_score"] = score_to_json(*report.candidate_feature_score);
    }
    if (report.reference_feature_score) {
        j["reference_feature_score"] = score_to_json(*report.reference_feature_score);
    }
    std::ofstream f(dir / (stem + ".json"));
    if (!f) throw store::StoreError("cannot write gate report: " + (dir / (stem + ".json")).string());
    f << j.dump(2) << "\n";
}

GateReport load_report(const fs::path& json_path) {
    std::ifstream f(json_path);
    if (!f) throw store::MissingFileError("no such report: " + json_path.string());
    json j;
    f >> j;
    GateReport r;
    r.technique = combo_from_json(j.at("technique"));
    r.strength = j.at("strength").get<double>();
    r.steps = j.at("steps").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.margin = j.at("margin").get<double>();
    r.candidate_similarity = j.at("candidate_similarity").get<double>();
    r.reference_similarity = j.at("reference_similarity").get<double>();
    const std::string v = j.at("verdict").get<std::string>();
    r.verdict = v == "helps" ? Verdict::helps : v == "hurts" ? Verdict::hurts : Verdict::no_effect;
    r.input_image = core::load_image(j.at("images").at("input").get<std::string>());
    r.reference_image = core::load_image(j.at("images").at("reference").get<std::string>());
    r.candidate_image = core::load_image(j.at("images").at("candidate").get<std::string>());
    if (j.contains("candidate_feature_score")) {
        r.candidate_feature_score = score_from_json(j.at("candidate_feature_score"));
    }
    if (j.contains("reference_feature_score")) {
        r.reference_feature_score = score_from_json(j.at("reference_feature_score"));
    }
    return r;
}

}  // namespace gate::harness
