#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "profiler/checkpoint.hpp"
#include "profiler/errors.hpp"
#include "profiler/features.hpp"
#include "profiler/models.hpp"

namespace profiler::models {

using json = nlohmann::json;

std::string config_to_json(const ModelConfig& cfg) {
    json j;
    j["variant"] = to_string(cfg.variant);
    j["lang"] = corpus::to_string(cfg.lang);
    j["d_cells"] = cfg.d_cells;
    j["n_filters"] = cfg.n_filters;
    j["d_char"] = cfg.d_char;
    j["embed_dim"] = cfg.embed_dim;
    j["max_tokens"] = cfg.max_tokens;
    j["max_chars"] = cfg.max_chars;
    j["lsa_k"] = cfg.lsa_k;
    j["seed"] = cfg.seed;
    j["trainable_embeddings"] = cfg.trainable_embeddings;
    return j.dump();
}

ModelConfig config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("model config: invalid JSON: ") + e.what());
    }
    ModelConfig cfg;
    cfg.variant = variant_from_string(j.at("variant").get<std::string>());
    cfg.lang = corpus::lang_from_string(j.at("lang").get<std::string>());
    cfg.d_cells = j.at("d_cells").get<int>();
    cfg.n_filters = j.at("n_filters").get<int>();
    cfg.d_char = j.at("d_char").get<int>();
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.max_tokens = j.at("max_tokens").get<int>();
    cfg.max_chars = j.at("max_chars").get<int>();
    cfg.lsa_k = j.at("lsa_k").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.trainable_embeddings = j.value("trainable_embeddings", false);
    return cfg;
}

void save_model_checkpoint(const std::filesystem::path& path, const Model& model,
                           std::uint64_t embeddings_digest) {
    json manifest;
    manifest["kind"] = "model";
    manifest["config"] = json::parse(config_to_json(model.config()));
    if (uses_chars(model.config().variant)) {
        json cps = json::array();
        for (char32_t cp : model.alphabet().codepoints_in_id_order())
            cps.push_back(static_cast<std::uint32_t>(cp));
        manifest["char_alphabet"] = std::move(cps);
    }
    if (uses_words(model.config().variant))
        manifest["embeddings_digest"] = io::hex64(embeddings_digest);

    std::vector<io::NamedTensor> tensors;
    for (auto& [name, value] : model.named_tensors()) tensors.push_back({name, value});
    io::save_checkpoint(path, manifest.dump(), tensors);
}

LoadedModel load_model_checkpoint(const std::filesystem::path& path) {
    const auto ck = io::load_checkpoint(path);
    json manifest;
    try {
        manifest = json::parse(ck.config_json);
    } catch (const json::parse_error& e) {
        throw InputError("load_model_checkpoint: bad manifest: " + std::string(e.what()));
    }
    if (manifest.value("kind", "") != "model")
        throw InputError("load_model_checkpoint: " + path.string() + " is not a model checkpoint");

    LoadedModel out;
    out.cfg = config_from_json(manifest.at("config").dump());
    if (manifest.contains("char_alphabet")) {
        std::vector<char32_t> cps;
        for (const auto& v : manifest["char_alphabet"])
            cps.push_back(static_cast<char32_t>(v.get<std::uint32_t>()));
        out.alphabet = text::CharAlphabet::from_codepoints(cps);
    }
    if (manifest.contains("embeddings_digest"))
        out.embeddings_digest = std::stoull(manifest["embeddings_digest"].get<std::string>(),
                                            nullptr, 16);
    for (const auto& nt : ck.tensors) out.tensors.emplace_back(nt.name, nt.value);
    return out;
}

Model instantiate_model(const LoadedModel& loaded, const text::WordEmbeddings* embeddings,
                        std::uint64_t embeddings_digest) {
    if (uses_words(loaded.cfg.variant)) {
        if (!embeddings)
            throw InputError("instantiate_model: variant " + to_string(loaded.cfg.variant) +
                             " needs --embeddings");
        if (loaded.embeddings_digest != 0 && embeddings_digest != 0 &&
            loaded.embeddings_digest != embeddings_digest)
            throw InputError(
                "instantiate_model: embeddings file does not match the one used at training "
                "time (digest mismatch)");
    }
    Model model(loaded.cfg, embeddings,
                uses_chars(loaded.cfg.variant) ? &loaded.alphabet : nullptr);
    model.load_tensors(loaded.tensors);
    return model;
}

}  // namespace profiler::models

namespace profiler::features {

using json = nlohmann::json;

void save_projector(const std::filesystem::path& path, const LsaProjector& projector) {
    json manifest;
    manifest["kind"] = "lsa_projector";
    manifest["word_ns"] = projector.spec.word_ns;
    manifest["char_ns"] = projector.spec.char_ns;
    manifest["min_total_freq"] = projector.spec.min_total_freq;
    manifest["k"] = projector.k();
    manifest["n_features"] = projector.tfidf.n_features();

    std::vector<io::NamedTensor> tensors;
    tensors.push_back({"lsa.components", projector.components});
    tensors.push_back({"lsa.singular_values",
                       Tensor({projector.singular_values.size()},
                              std::vector<double>(projector.singular_values.begin(),
                                                  projector.singular_values.end()))});
    io::save_checkpoint(path, manifest.dump(), tensors);
    io::write_file_atomic(path.string() + ".tfidf", tfidf_sidecar_text(projector.tfidf));
}

LsaProjector load_projector(const std::filesystem::path& path) {
    const auto ck = io::load_checkpoint(path);
    json manifest;
    try {
        manifest = json::parse(ck.config_json);
    } catch (const json::parse_error& e) {
        throw InputError("load_projector: bad manifest: " + std::string(e.what()));
    }
    if (manifest.value("kind", "") != "lsa_projector")
        throw InputError("load_projector: " + path.string() + " is not a projector checkpoint");

    LsaProjector proj;
    proj.spec.word_ns = manifest.at("word_ns").get<std::vector<int>>();
    proj.spec.char_ns = manifest.at("char_ns").get<std::vector<int>>();
    proj.spec.min_total_freq = manifest.at("min_total_freq").get<long>();

    for (const auto& nt : ck.tensors) {
        if (nt.name == "lsa.components") proj.components = nt.value;
        if (nt.name == "lsa.singular_values") {
            proj.singular_values.assign(nt.value.data(), nt.value.data() + nt.value.numel());
        }
    }
    if (proj.components.rank() != 2 || proj.singular_values.empty())
        throw InputError("load_projector: missing lsa tensors in " + path.string());

    const auto sidecar = path.string() + ".tfidf";
    std::ifstream in(sidecar, std::ios::binary);
    if (!in) throw InputError("load_projector: missing tf-idf sidecar " + sidecar);
    std::ostringstream ss;
    ss << in.rdbuf();
    proj.tfidf = tfidf_from_sidecar_text(ss.str());
    if (proj.tfidf.n_features() != proj.components.dim(0))
        throw InputError("load_projector: sidecar feature count does not match components");
    return proj;
}

}  // namespace profiler::features
