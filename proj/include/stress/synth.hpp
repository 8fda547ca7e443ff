#pragma once

// Deterministic synthetic stand-in for a wearable affect corpus.
//
// Each condition block is a sinusoid whose frequency depends only on the
// affect class; each subject shifts the baseline level and the amplitude of
// that sinusoid (a 6 x 3 grid, so up to 18 subjects are pairwise distinct).
// Per-modality noise levels make some sensors better predictors than others.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "stress/signal.hpp"

namespace stress {

struct SynthOptions {
    std::vector<SensorModality> modalities = SensorModality::chest();
    double sampling_rate = 32.0;
    double seconds_per_condition = 12.0;
    double noise_scale = 1.0;
};

// Dominant frequency in Hz for each affect condition.
inline double synth_class_frequency(AffectClass c) {
    switch (c) {
        case AffectClass::Baseline: return 1.0;
        case AffectClass::Stress: return 4.0;
        case AffectClass::Amusement: return 2.0;
        case AffectClass::Meditation: return 0.5;
    }
    return 1.0;
}

inline double synth_noise_level(SensorKind kind) {
    switch (kind) {
        case SensorKind::RESP: return 0.10;
        case SensorKind::BVP: return 0.15;
        case SensorKind::ECG: return 0.20;
        case SensorKind::ACC: return 0.30;
        case SensorKind::EDA: return 0.80;
        case SensorKind::TEMP: return 1.00;
        case SensorKind::EMG: return 1.40;
    }
    return 1.0;
}

inline std::string synth_subject_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%02d", index + 1);
    return buf;
}

// Subject-level signature: baseline level and sinusoid amplitude.
struct SubjectSignature {
    double level;
    double amplitude;
};

inline SubjectSignature synth_subject_signature(int index) {
    return {0.9 * (static_cast<double>(index % 6) - 2.5), 0.6 + 0.45 * static_cast<double>((index / 6) % 3)};
}

inline std::vector<Recording> synth_generate(int n_subjects, ClassScheme classes, std::uint64_t seed,
                                             const SynthOptions& opt = {}) {
    if (n_subjects < 2) fail("InvalidArgument", "synthetic corpus needs at least 2 subjects", "n_subjects");
    const auto per = static_cast<std::int64_t>(std::llround(opt.seconds_per_condition * opt.sampling_rate));
    if (per < 1) fail("InvalidArgument", "condition blocks would be empty", "seconds_per_condition");
    std::vector<Recording> out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n_classes = class_count(classes);
    for (int s = 0; s < n_subjects; ++s) {
        const auto sig = synth_subject_signature(s);
        for (const auto& mod : opt.modalities) {
            Recording rec;
            rec.subject_id = synth_subject_id(s);
            rec.modality = mod;
            rec.sampling_rate = opt.sampling_rate;
            rec.channels = mod.channels();
            const std::int64_t n = per * n_classes;
            rec.samples.assign(static_cast<std::size_t>(n) * rec.channels, 0.0);
            const double sigma = synth_noise_level(mod.kind()) * opt.noise_scale;
            for (int k = 0; k < n_classes; ++k) {
                const auto label = static_cast<AffectClass>(k);
                rec.intervals.push_back({k * per, (k + 1) * per, label});
                const double freq = synth_class_frequency(label);
                for (int c = 0; c < rec.channels; ++c) {
                    const double phase = 2.0 * std::numbers::pi * unit(rng);
                    const double level = sig.level + 0.5 * c;
                    for (std::int64_t t = 0; t < per; ++t) {
                        const double time = static_cast<double>(t) / opt.sampling_rate;
                        const double v = level +
                                         sig.amplitude * std::sin(2.0 * std::numbers::pi * freq * time + phase) +
                                         sigma * noise(rng);
                        rec.samples[static_cast<std::size_t>(c) * n + k * per + t] = v;
                    }
                }
            }
            out.push_back(std::move(rec));
        }
    }
    return out;
}

}  // namespace stress
