#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "spotkit/binio.hpp"
#include "spotkit/error.hpp"
#include "spotkit/matrix.hpp"
#include "spotkit/numerics.hpp"
#include "spotkit/rng.hpp"

namespace spotkit {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// Per-video frame features. Files store 32-bit floats; compute is 64-bit.
struct FeatureSequence {
    Matrix features;  // N_frames × D
    double frame_rate = 2.0;
    std::string video_id;
};

constexpr char kFeatureMagic[] = "FEAT";
constexpr std::uint32_t kFeatureVersion = 1;

inline void save_features(const FeatureSequence& seq, const fs::path& path) {
    require(seq.frame_rate > 0, ErrorKind::invalid_argument, "save_features: frame rate must be positive");
    binio::Writer w;
    w.str(kFeatureMagic);
    w.u32(kFeatureVersion);
    w.u32(static_cast<std::uint32_t>(seq.features.rows()));
    w.u32(static_cast<std::uint32_t>(seq.features.cols()));
    w.f32(static_cast<float>(seq.frame_rate));
    for (double x : seq.features.flat()) w.f32(static_cast<float>(x));
    w.save(path);
}

inline FeatureSequence load_features(const fs::path& path) {
    binio::Reader r = binio::Reader::from_file(path);
    r.expect_magic(kFeatureMagic);
    const std::uint32_t version = r.u32("version");
    require(version == kFeatureVersion, ErrorKind::bad_version,
            path.filename().string() + ": unsupported version " + std::to_string(version));
    const std::uint32_t n = r.u32("frame count");
    const std::uint32_t d = r.u32("feature dim");
    FeatureSequence seq;
    seq.frame_rate = r.f32("frame rate");
    require(seq.frame_rate > 0, ErrorKind::io, path.filename().string() + ": non-positive frame rate");
    require(n >= 1 && d >= 1, ErrorKind::io, path.filename().string() + ": empty feature matrix");
    r.need(static_cast<std::size_t>(n) * d * 4, "payload");
    seq.features = Matrix(n, d);
    for (double& x : seq.features.flat()) x = static_cast<double>(r.f32("payload"));
    r.expect_end();
    require(all_finite(seq.features), ErrorKind::io, path.filename().string() + ": non-finite features");
    seq.video_id = path.stem().string();
    return seq;
}

// Dataset-level label → index vocabulary.
struct ClassVocab {
    std::vector<std::string> names;

    std::size_t size() const { return names.size(); }

    std::size_t index_of(const std::string& label) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == label) return i;
        fail(ErrorKind::invalid_argument, "unknown class label: " + label);
    }
};

inline void save_classes(const ClassVocab& vocab, const fs::path& path) {
    ordered_json j = ordered_json::object();
    for (std::size_t i = 0; i < vocab.names.size(); ++i) j[vocab.names[i]] = i;
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), ErrorKind::io, "cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

inline ClassVocab load_classes(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open: " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, path.string() + ": " + e.what());
    }
    require(j.is_object(), ErrorKind::io, path.string() + ": expected an object");
    std::map<std::size_t, std::string> by_index;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto idx = it.value().get<std::size_t>();
        require(!by_index.count(idx), ErrorKind::io, path.string() + ": duplicate class index");
        by_index[idx] = it.key();
    }
    ClassVocab vocab;
    for (auto& [idx, name] : by_index) {
        require(idx == vocab.names.size(), ErrorKind::io, path.string() + ": class indices not contiguous");
        vocab.names.push_back(name);
    }
    require(!vocab.names.empty(), ErrorKind::io, path.string() + ": no classes");
    return vocab;
}

struct GroundTruthAction {
    std::size_t class_index = 0;
    std::int64_t position_ms = 0;
    bool visible = true;
};

inline void save_labels(const std::vector<GroundTruthAction>& actions, const ClassVocab& vocab,
                        const fs::path& path) {
    ordered_json j = ordered_json::array();
    for (const auto& a : actions) {
        require(a.class_index < vocab.size(), ErrorKind::invalid_argument, "save_labels: class index out of range");
        j.push_back({{"label", vocab.names[a.class_index]},
                     {"position_ms", a.position_ms},
                     {"visible", a.visible}});
    }
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), ErrorKind::io, "cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

inline std::vector<GroundTruthAction> load_labels(const fs::path& path, const ClassVocab& vocab) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open: " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, path.string() + ": " + e.what());
    }
    require(j.is_array(), ErrorKind::io, path.string() + ": expected an array");
    std::vector<GroundTruthAction> actions;
    for (const auto& item : j) {
        GroundTruthAction a;
        a.class_index = vocab.index_of(item.at("label").get<std::string>());
        a.position_ms = item.at("position_ms").get<std::int64_t>();
        a.visible = item.at("visible").get<bool>();
        actions.push_back(a);
    }
    return actions;
}

// One training sample: a fixed window of frames and its multi-label target.
// target[c] = 1 iff an action of class c falls in the window; the last entry
// is the background unit, set iff no action falls in the window.
struct TrainingChunk {
    Matrix frames;
    Vec target;
    std::int64_t center_ms = 0;
};

// Non-overlapping windows [k·T, (k+1)·T); a trailing partial window is dropped.
inline std::vector<TrainingChunk> make_training_chunks(const FeatureSequence& seq,
                                                       const std::vector<GroundTruthAction>& actions,
                                                       double window_seconds, std::size_t action_classes) {
    const double fexact = window_seconds * seq.frame_rate;
    const auto wframes = static_cast<std::size_t>(std::llround(fexact));
    require(std::abs(fexact - static_cast<double>(wframes)) < 1e-9, ErrorKind::invalid_argument,
            "make_training_chunks: window is not a whole number of frames");
    require(wframes >= 2, ErrorKind::invalid_argument, "make_training_chunks: window shorter than 2 frames");
    const std::size_t class_count = action_classes + 1;
    const std::size_t n_chunks = seq.features.rows() / wframes;
    std::vector<TrainingChunk> chunks;
    chunks.reserve(n_chunks);
    const double window_ms = window_seconds * 1000.0;
    for (std::size_t k = 0; k < n_chunks; ++k) {
        TrainingChunk ch;
        ch.frames = Matrix(wframes, seq.features.cols());
        for (std::size_t i = 0; i < wframes; ++i)
            for (std::size_t j = 0; j < seq.features.cols(); ++j)
                ch.frames(i, j) = seq.features(k * wframes + i, j);
        ch.target.assign(class_count, 0.0);
        const double start_ms = static_cast<double>(k) * window_ms;
        const double end_ms = static_cast<double>(k + 1) * window_ms;
        ch.center_ms = static_cast<std::int64_t>(std::llround(start_ms + window_ms / 2.0));
        bool any = false;
        for (const auto& a : actions) {
            require(a.class_index < action_classes, ErrorKind::invalid_argument,
                    "make_training_chunks: class index out of range");
            const auto pos = static_cast<double>(a.position_ms);
            if (pos >= start_ms && pos < end_ms) {
                ch.target[a.class_index] = 1.0;
                any = true;
            }
        }
        if (!any) ch.target[action_classes] = 1.0;
        chunks.push_back(std::move(ch));
    }
    return chunks;
}

// ---------------------------------------------------------------------------
// Synthetic dataset: background noise plus class-conditional context patterns
// injected before and after each action. Classes come in swapped pairs that
// share the same unordered frame content, so a pooler blind to temporal order
// cannot separate them; splitting past from future can.
// ---------------------------------------------------------------------------

struct SynthConfig {
    std::uint64_t seed = 7;
    std::size_t train_games = 12;
    std::size_t val_games = 3;
    std::size_t test_games = 3;
    double duration_s = 600.0;
    std::size_t dim = 16;
    double frame_rate = 2.0;
    std::size_t class_count = 4;  // even, >= 2
    std::size_t actions_per_game = 12;
    double sigma = 0.25;
    double amplitude = 1.0;
    double t_before = 7.5;
    double t_after = 7.5;
    double visible_prob = 0.8;
    std::size_t retry_budget = 1000;

    void validate() const {
        require(class_count >= 2 && class_count % 2 == 0, ErrorKind::invalid_argument,
                "synth: class count must be even and >= 2");
        require(train_games >= 1 && val_games >= 1 && test_games >= 1, ErrorKind::invalid_argument,
                "synth: every split needs at least one game");
        require(duration_s > t_before + t_after, ErrorKind::invalid_argument, "synth: duration too short");
        require(sigma > 0 && amplitude > 0 && frame_rate > 0, ErrorKind::invalid_argument,
                "synth: sigma, amplitude and frame rate must be positive");
    }
};

struct SynthClassDef {
    std::string name;
    std::size_t before_pattern = 0;
    std::size_t after_pattern = 0;
};

struct SynthSummary {
    ClassVocab vocab;
    Matrix patterns;  // (1 + class_count/2) × dim, orthonormal directions × amplitude
    std::vector<SynthClassDef> classes;
    std::vector<std::string> train_videos, val_videos, test_videos;
};

namespace detail {

// Orthonormalized random directions scaled to the configured amplitude.
inline Matrix make_patterns(std::size_t count, std::size_t dim, double amplitude, Rng& rng) {
    require(count <= dim, ErrorKind::invalid_argument, "synth: need dim >= pattern count");
    Matrix p(count, dim);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t tries = 0;; ++tries) {
            for (std::size_t j = 0; j < dim; ++j) p(i, j) = rng.normal();
            for (std::size_t prev = 0; prev < i; ++prev) {
                const double proj = dot(p.row(i), p.row(prev));
                for (std::size_t j = 0; j < dim; ++j) p(i, j) -= proj * p(prev, j);
            }
            const double n = l2_norm(p.row(i));
            if (n > 1e-6) {
                for (std::size_t j = 0; j < dim; ++j) p(i, j) *= amplitude / n;
                break;
            }
            require(tries < 100, ErrorKind::numeric, "synth: failed to draw orthogonal patterns");
        }
    }
    return p;
}

struct SynthVideo {
    FeatureSequence seq;
    std::vector<GroundTruthAction> actions;
};

inline SynthVideo make_synth_video(const SynthConfig& cfg, const SynthSummary& summary,
                                   const std::string& video_id, std::uint64_t substream) {
    Rng rng(substream);
    SynthVideo video;
    const auto n_frames = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.frame_rate));

    // Disjoint context windows [p − t_before, p + t_after]; overlapping draws
    // are rejected and retried up to the budget.
    std::vector<double> positions;
    for (std::size_t a = 0; a < cfg.actions_per_game; ++a) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < cfg.retry_budget; ++attempt) {
            const double p = rng.uniform(cfg.t_before, cfg.duration_s - cfg.t_after);
            bool clash = false;
            for (double q : positions)
                if (std::abs(p - q) <= cfg.t_before + cfg.t_after) {
                    clash = true;
                    break;
                }
            if (!clash) {
                positions.push_back(p);
                placed = true;
                break;
            }
        }
        require(placed, ErrorKind::invalid_argument,
                "synth: could not place non-overlapping actions within the retry budget");
        GroundTruthAction act;
        act.class_index = rng.index(cfg.class_count);
        act.position_ms = std::llround(positions.back() * 1000.0);
        act.visible = rng.bernoulli(cfg.visible_prob);
        video.actions.push_back(act);
    }

    video.seq.video_id = video_id;
    video.seq.frame_rate = cfg.frame_rate;
    video.seq.features = Matrix(n_frames, cfg.dim);
    for (double& x : video.seq.features.flat()) x = rng.normal(0.0, cfg.sigma);

    for (std::size_t a = 0; a < video.actions.size(); ++a) {
        const double p = positions[a];
        const auto& def = summary.classes[video.actions[a].class_index];
        const auto before = summary.patterns.row(def.before_pattern);
        const auto after = summary.patterns.row(def.after_pattern);
        for (std::size_t f = 0; f < n_frames; ++f) {
            const double t = static_cast<double>(f) / cfg.frame_rate;
            if (t >= p - cfg.t_before && t < p) {
                for (std::size_t j = 0; j < cfg.dim; ++j) video.seq.features(f, j) += before[j];
            } else if (t >= p && t < p + cfg.t_after) {
                for (std::size_t j = 0; j < cfg.dim; ++j) video.seq.features(f, j) += after[j];
            }
        }
    }
    // Match the on-disk 32-bit storage so in-memory use equals a re-load.
    for (double& x : video.seq.features.flat()) x = static_cast<double>(static_cast<float>(x));
    return video;
}

}  // namespace detail

// Builds the pattern table and class pairing without touching the filesystem.
// Pattern 0 is shared; pair t maps to classes (shared→p_t) and (p_t→shared),
// so each pair's unordered frame content is identical while the ordered
// before/after halves differ. Across pairs, the forward members share their
// before pattern and the reversed members share their after pattern.
inline SynthSummary plan_synthetic_dataset(const SynthConfig& cfg) {
    cfg.validate();
    SynthSummary summary;
    const std::size_t pairs = cfg.class_count / 2;
    Rng pattern_rng(mix_seed(cfg.seed, 0x5041545320313ULL));
    summary.patterns = detail::make_patterns(pairs + 1, cfg.dim, cfg.amplitude, pattern_rng);
    for (std::size_t t = 1; t <= pairs; ++t) {
        const std::string tag = "p" + std::to_string(t);
        summary.classes.push_back({"s_then_" + tag, 0, t});
        summary.classes.push_back({tag + "_then_s", t, 0});
    }
    for (const auto& def : summary.classes) summary.vocab.names.push_back(def.name);
    return summary;
}

inline SynthSummary gen_synthetic_dataset(const SynthConfig& cfg, const fs::path& root) {
    SynthSummary summary = plan_synthetic_dataset(cfg);
    fs::create_directories(root);
    save_classes(summary.vocab, root / "classes.json");

    const struct {
        const char* name;
        std::size_t games;
        std::uint64_t id;
        std::vector<std::string>* out;
    } splits[] = {
        {"train", cfg.train_games, 1, &summary.train_videos},
        {"val", cfg.val_games, 2, &summary.val_videos},
        {"test", cfg.test_games, 3, &summary.test_videos},
    };
    for (const auto& split : splits) {
        const fs::path dir = root / split.name;
        fs::create_directories(dir);
        for (std::size_t v = 0; v < split.games; ++v) {
            char id[64];
            std::snprintf(id, sizeof(id), "%s_%03zu", split.name, v);
            const std::uint64_t substream = mix_seed(cfg.seed, split.id * 1000003ULL + v + 1);
            detail::SynthVideo video = detail::make_synth_video(cfg, summary, id, substream);
            save_features(video.seq, dir / (video.seq.video_id + ".feat"));
            save_labels(video.actions, summary.vocab, dir / (video.seq.video_id + ".labels.json"));
            split.out->push_back(video.seq.video_id);
        }
    }
    return summary;
}

}  // namespace spotkit
