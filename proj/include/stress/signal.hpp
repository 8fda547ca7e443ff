#pragma once

// Multimodal recordings, condition labels and fixed-length windowing.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stress/error.hpp"

namespace stress {

enum class Location { Chest, Wrist };
enum class SensorKind { ACC, ECG, EDA, EMG, RESP, TEMP, BVP };

inline std::string_view to_string(Location loc) {
    return loc == Location::Chest ? "chest" : "wrist";
}

inline std::string_view to_string(SensorKind kind) {
    constexpr std::array<std::string_view, 7> names{"acc", "ecg", "eda", "emg", "resp", "temp", "bvp"};
    return names[static_cast<std::size_t>(kind)];
}

inline std::optional<Location> parse_location(std::string_view s) {
    if (s == "chest") return Location::Chest;
    if (s == "wrist") return Location::Wrist;
    return std::nullopt;
}

inline std::optional<SensorKind> parse_kind(std::string_view s) {
    for (int i = 0; i < 7; ++i) {
        auto k = static_cast<SensorKind>(i);
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

class SensorModality {
public:
    SensorModality() = default;
    SensorModality(Location location, SensorKind kind) : location_(location), kind_(kind) {
        if (!valid(location, kind))
            fail("InvalidModality", std::string(to_string(location)) + "/" + std::string(to_string(kind)) +
                                        " is not a recorded modality", "kind");
    }

    // Chest carries ACC, ECG, EDA, EMG, RESP, TEMP; wrist carries ACC, BVP, EDA, TEMP.
    static constexpr bool valid(Location location, SensorKind kind) {
        if (location == Location::Chest) return kind != SensorKind::BVP;
        return kind == SensorKind::ACC || kind == SensorKind::BVP || kind == SensorKind::EDA ||
               kind == SensorKind::TEMP;
    }

    static std::vector<SensorModality> all() {
        std::vector<SensorModality> out;
        for (auto loc : {Location::Chest, Location::Wrist})
            for (int k = 0; k < 7; ++k)
                if (valid(loc, static_cast<SensorKind>(k))) out.emplace_back(loc, static_cast<SensorKind>(k));
        return out;
    }

    static std::vector<SensorModality> chest() {
        std::vector<SensorModality> out;
        for (auto m : all())
            if (m.location() == Location::Chest) out.push_back(m);
        return out;
    }

    Location location() const { return location_; }
    SensorKind kind() const { return kind_; }
    int channels() const { return kind_ == SensorKind::ACC ? 3 : 1; }

    // "chest_resp"
    std::string name() const { return std::string(to_string(location_)) + "_" + std::string(to_string(kind_)); }
    // "RESP", used as the node id of a sensor in the fusion network
    std::string short_name() const {
        std::string s(to_string(kind_));
        for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return s;
    }

    static SensorModality parse(std::string_view name) {
        auto pos = name.find('_');
        if (pos == std::string_view::npos) fail("InvalidModality", "expected location_kind, got " + std::string(name));
        auto loc = parse_location(name.substr(0, pos));
        auto kind = parse_kind(name.substr(pos + 1));
        if (!loc || !kind) fail("InvalidModality", "unknown modality " + std::string(name));
        return {*loc, *kind};
    }

    friend bool operator==(const SensorModality&, const SensorModality&) = default;

private:
    Location location_ = Location::Chest;
    SensorKind kind_ = SensorKind::RESP;
};

// Serialized as integer codes 0..3 in declaration order.
enum class AffectClass : int { Baseline = 0, Stress = 1, Amusement = 2, Meditation = 3 };

inline std::string_view to_string(AffectClass c) {
    constexpr std::array<std::string_view, 4> names{"baseline", "stress", "amusement", "meditation"};
    return names[static_cast<std::size_t>(c)];
}

inline std::optional<AffectClass> parse_affect(std::string_view s) {
    std::string lower(s);
    for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    for (int i = 0; i < 4; ++i)
        if (to_string(static_cast<AffectClass>(i)) == lower) return static_cast<AffectClass>(i);
    return std::nullopt;
}

// Four = all affect conditions; Three = {Baseline, Stress, Amusement}.
enum class ClassScheme { Three, Four };

inline int class_count(ClassScheme s) { return s == ClassScheme::Three ? 3 : 4; }

inline bool in_scheme(ClassScheme s, AffectClass c) { return static_cast<int>(c) < class_count(s); }

inline std::vector<std::string> class_labels(ClassScheme s) {
    std::vector<std::string> out;
    for (int i = 0; i < class_count(s); ++i) out.emplace_back(to_string(static_cast<AffectClass>(i)));
    return out;
}

inline std::string_view to_string(ClassScheme s) { return s == ClassScheme::Three ? "three" : "four"; }

inline ClassScheme parse_scheme(std::string_view s) {
    if (s == "three" || s == "3") return ClassScheme::Three;
    if (s == "four" || s == "4") return ClassScheme::Four;
    fail("InvalidArgument", "unknown class scheme " + std::string(s), "class_scheme");
}

struct ConditionInterval {
    std::int64_t start = 0;  // inclusive
    std::int64_t end = 0;    // exclusive
    AffectClass label = AffectClass::Baseline;
};

struct Recording {
    std::string subject_id;
    SensorModality modality;
    double sampling_rate = 1.0;
    int channels = 1;
    // Channel-major: samples[c * n_samples() + t].
    std::vector<double> samples;
    std::vector<ConditionInterval> intervals;

    std::int64_t n_samples() const {
        return channels > 0 ? static_cast<std::int64_t>(samples.size()) / channels : 0;
    }
    double at(int channel, std::int64_t t) const { return samples[channel * n_samples() + t]; }

    void validate() const {
        if (channels != modality.channels())
            fail("ChannelMismatch",
                 modality.name() + " requires " + std::to_string(modality.channels()) + " channels, got " +
                     std::to_string(channels),
                 "channels");
        if (!(sampling_rate > 0.0)) fail("MalformedManifest", "sampling rate must be positive", "sampling_rate_hz");
        if (samples.size() % static_cast<std::size_t>(channels) != 0)
            fail("ChannelMismatch", "sample buffer is not a whole number of frames", "channels");
        const auto n = n_samples();
        std::int64_t prev_end = 0;
        for (std::size_t i = 0; i < intervals.size(); ++i) {
            const auto& iv = intervals[i];
            const std::string field = "intervals[" + std::to_string(i) + "]";
            if (iv.start < 0 || iv.end > n || iv.start >= iv.end)
                fail("IntervalOutOfBounds",
                     "[" + std::to_string(iv.start) + ", " + std::to_string(iv.end) + ") lies outside [0, " +
                         std::to_string(n) + ")",
                     field);
            if (iv.start < prev_end) fail("MalformedManifest", "intervals must be sorted and non-overlapping", field);
            prev_end = iv.end;
        }
    }
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) fail("MalformedManifest", std::string("missing field ") + key, key);
    return j.at(key);
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("MissingFile", "cannot open " + path, path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

// Reads a JSON manifest plus a headerless CSV (one row per sample, one column per channel).
inline Recording load_recording(const std::string& manifest_path, const std::string& data_path) {
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(detail::slurp(manifest_path));
    } catch (const nlohmann::json::parse_error& e) {
        fail("MalformedManifest", std::string("invalid JSON: ") + e.what(), manifest_path);
    }
    Recording rec;
    try {
        const auto& subject = detail::require(m, "subject");
        if (!subject.is_string()) fail("MalformedManifest", "subject must be a string", "subject");
        rec.subject_id = subject.get<std::string>();

        auto loc = parse_location(detail::require(m, "location").get<std::string>());
        if (!loc) fail("MalformedManifest", "location must be chest or wrist", "location");
        auto kind = parse_kind(detail::require(m, "kind").get<std::string>());
        if (!kind) fail("MalformedManifest", "unknown sensor kind", "kind");
        if (!SensorModality::valid(*loc, *kind))
            fail("MalformedManifest", "no such sensor at this location", "kind");
        rec.modality = SensorModality(*loc, *kind);

        const auto& rate = detail::require(m, "sampling_rate_hz");
        if (!rate.is_number() || !(rate.get<double>() > 0.0))
            fail("MalformedManifest", "sampling_rate_hz must be a positive number", "sampling_rate_hz");
        rec.sampling_rate = rate.get<double>();

        const auto& ch = detail::require(m, "channels");
        if (!ch.is_number_integer()) fail("MalformedManifest", "channels must be an integer", "channels");
        rec.channels = ch.get<int>();
        if (rec.channels != rec.modality.channels())
            fail("ChannelMismatch",
                 rec.modality.name() + " requires " + std::to_string(rec.modality.channels()) + " channels, got " +
                     std::to_string(rec.channels),
                 "channels");

        const auto& ivs = detail::require(m, "intervals");
        if (!ivs.is_array()) fail("MalformedManifest", "intervals must be an array", "intervals");
        for (std::size_t i = 0; i < ivs.size(); ++i) {
            const auto& iv = ivs[i];
            const std::string field = "intervals[" + std::to_string(i) + "]";
            if (!iv.is_array() || iv.size() != 3 || !iv[0].is_number_integer() || !iv[1].is_number_integer() ||
                !iv[2].is_string())
                fail("MalformedManifest", "interval must be [start, end, label]", field);
            auto label = parse_affect(iv[2].get<std::string>());
            if (!label) fail("MalformedManifest", "unknown condition label " + iv[2].get<std::string>(), field);
            rec.intervals.push_back({iv[0].get<std::int64_t>(), iv[1].get<std::int64_t>(), *label});
        }
    } catch (const nlohmann::json::type_error& e) {
        fail("MalformedManifest", e.what());
    }

    // CSV rows are frames; transpose into channel-major storage.
    std::ifstream in(data_path);
    if (!in) fail("MissingFile", "cannot open " + data_path, data_path);
    std::vector<std::vector<double>> columns(rec.channels);
    std::string line;
    std::int64_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t col = 0;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            auto next = line.find(',', pos);
            if (next == std::string::npos) next = line.size();
            if (col >= static_cast<std::size_t>(rec.channels))
                fail("ChannelMismatch", "row " + std::to_string(row) + " has more than " +
                                            std::to_string(rec.channels) + " columns", "channels");
            const std::string cell = line.substr(pos, next - pos);
            char* endp = nullptr;
            double v = std::strtod(cell.c_str(), &endp);
            if (endp == cell.c_str()) fail("MalformedData", "row " + std::to_string(row) + ": not a number", data_path);
            columns[col++].push_back(v);
            pos = next + 1;
        }
        if (col != static_cast<std::size_t>(rec.channels))
            fail("ChannelMismatch", "row " + std::to_string(row) + " has " + std::to_string(col) +
                                        " columns, expected " + std::to_string(rec.channels), "channels");
        ++row;
    }
    if (m.contains("n_samples") && m["n_samples"].is_number_integer() && m["n_samples"].get<std::int64_t>() != row)
        fail("MalformedManifest", "n_samples does not match data row count", "n_samples");
    for (auto& c : columns) rec.samples.insert(rec.samples.end(), c.begin(), c.end());
    rec.validate();
    return rec;
}

inline nlohmann::json manifest_json(const Recording& rec) {
    nlohmann::json ivs = nlohmann::json::array();
    for (const auto& iv : rec.intervals) ivs.push_back({iv.start, iv.end, std::string(to_string(iv.label))});
    return {{"subject", rec.subject_id},
            {"location", std::string(to_string(rec.modality.location()))},
            {"kind", std::string(to_string(rec.modality.kind()))},
            {"sampling_rate_hz", rec.sampling_rate},
            {"channels", rec.channels},
            {"n_samples", rec.n_samples()},
            {"intervals", ivs}};
}

inline void save_recording(const Recording& rec, const std::string& manifest_path, const std::string& data_path) {
    std::ofstream mf(manifest_path);
    if (!mf) fail("IoError", "cannot write " + manifest_path, manifest_path);
    mf << manifest_json(rec).dump(2) << "\n";
    std::ofstream df(data_path);
    if (!df) fail("IoError", "cannot write " + data_path, data_path);
    df.precision(17);
    const auto n = rec.n_samples();
    for (std::int64_t t = 0; t < n; ++t) {
        for (int c = 0; c < rec.channels; ++c) {
            if (c) df << ',';
            df << rec.at(c, t);
        }
        df << '\n';
    }
}

// Linear-interpolation resampler for rate harmonization. Interval bounds are
// rescaled to the new rate.
inline Recording resample_linear(const Recording& rec, double new_rate) {
    if (!(new_rate > 0.0)) fail("InvalidArgument", "new rate must be positive", "rate");
    Recording out = rec;
    out.sampling_rate = new_rate;
    const auto n_in = rec.n_samples();
    const double ratio = new_rate / rec.sampling_rate;
    const auto n_out = static_cast<std::int64_t>(std::floor(static_cast<double>(n_in) * ratio));
    out.samples.assign(static_cast<std::size_t>(n_out) * rec.channels, 0.0);
    for (int c = 0; c < rec.channels; ++c) {
        for (std::int64_t t = 0; t < n_out; ++t) {
            double src = static_cast<double>(t) / ratio;
            auto i0 = static_cast<std::int64_t>(std::floor(src));
            if (i0 >= n_in - 1) {
                out.samples[c * n_out + t] = rec.at(c, n_in - 1);
                continue;
            }
            double frac = src - static_cast<double>(i0);
            out.samples[c * n_out + t] = (1.0 - frac) * rec.at(c, i0) + frac * rec.at(c, i0 + 1);
        }
    }
    for (auto& iv : out.intervals) {
        iv.start = std::min<std::int64_t>(n_out, static_cast<std::int64_t>(std::llround(iv.start * ratio)));
        iv.end = std::min<std::int64_t>(n_out, static_cast<std::int64_t>(std::llround(iv.end * ratio)));
    }
    out.intervals.erase(std::remove_if(out.intervals.begin(), out.intervals.end(),
                                       [](const ConditionInterval& iv) { return iv.start >= iv.end; }),
                        out.intervals.end());
    return out;
}

struct Window {
    std::string subject_id;
    SensorModality modality;
    int channels = 1;
    int length = 0;
    std::vector<double> data;  // channels x length, row-major
    AffectClass label = AffectClass::Baseline;
    std::int64_t source_offset = 0;
    // Stable across modalities recorded on the same timeline: subject:interval:index.
    std::string sample_id;

    double at(int c, int t) const { return data[static_cast<std::size_t>(c) * length + t]; }
};

enum class NormScheme { None, ZScore, MinMax };

inline std::string_view to_string(NormScheme s) {
    switch (s) {
        case NormScheme::ZScore: return "zscore";
        case NormScheme::MinMax: return "minmax";
        default: return "none";
    }
}

inline NormScheme parse_norm(std::string_view s) {
    if (s == "zscore") return NormScheme::ZScore;
    if (s == "minmax") return NormScheme::MinMax;
    if (s == "none") return NormScheme::None;
    fail("InvalidArgument", "unknown normalization " + std::string(s), "norm");
}

// Per-channel affine map x -> (x - center) / scale.
struct NormStats {
    NormScheme scheme = NormScheme::None;
    std::vector<double> center;
    std::vector<double> scale;

    bool identity() const { return scheme == NormScheme::None || center.empty(); }

    void apply(std::vector<double>& data, int channels, int length) const {
        if (identity()) return;
        for (int c = 0; c < channels; ++c)
            for (int t = 0; t < length; ++t) {
                auto& v = data[static_cast<std::size_t>(c) * length + t];
                v = (v - center[c]) / scale[c];
            }
    }
};

struct WindowedDataset {
    std::vector<Window> windows;
    ClassScheme class_scheme = ClassScheme::Four;
    SensorModality modality;
    int channels = 1;
    int window_len = 0;
    double sampling_rate = 1.0;
    NormStats normalization;

    std::size_t size() const { return windows.size(); }

    std::vector<std::string> subjects() const {
        std::vector<std::string> s;
        for (const auto& w : windows) s.push_back(w.subject_id);
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
        return s;
    }

    WindowedDataset subset(const std::vector<std::size_t>& idx) const {
        WindowedDataset out = *this;
        out.windows.clear();
        out.windows.reserve(idx.size());
        for (auto i : idx) out.windows.push_back(windows.at(i));
        return out;
    }
};

// Emits every window [o, o + window_len) with o = start + m * stride inside a
// single condition interval. Windows straddling a boundary are never produced.
inline WindowedDataset segment_windows(const Recording& rec, int window_len, int stride,
                                       ClassScheme scheme = ClassScheme::Four) {
    if (window_len < 1) fail("InvalidArgument", "window_len must be >= 1", "window_len");
    if (stride < 1) fail("InvalidArgument", "stride must be >= 1", "stride");
    WindowedDataset ds;
    ds.class_scheme = scheme;
    ds.modality = rec.modality;
    ds.channels = rec.channels;
    ds.window_len = window_len;
    ds.sampling_rate = rec.sampling_rate;
    const auto n = rec.n_samples();
    bool any_fits = false;
    for (std::size_t i = 0; i < rec.intervals.size(); ++i) {
        const auto& iv = rec.intervals[i];
        if (!in_scheme(scheme, iv.label)) continue;
        int index = 0;
        for (std::int64_t o = iv.start; o + window_len <= iv.end; o += stride, ++index) {
            any_fits = true;
            Window w;
            w.subject_id = rec.subject_id;
            w.modality = rec.modality;
            w.channels = rec.channels;
            w.length = window_len;
            w.label = iv.label;
            w.source_offset = o;
            w.sample_id = rec.subject_id + ":" + std::to_string(i) + ":" + std::to_string(index);
            w.data.resize(static_cast<std::size_t>(rec.channels) * window_len);
            for (int c = 0; c < rec.channels; ++c)
                std::copy_n(rec.samples.begin() + c * n + o, window_len,
                            w.data.begin() + static_cast<std::ptrdiff_t>(c) * window_len);
            ds.windows.push_back(std::move(w));
        }
    }
    if (!any_fits)
        fail("WindowTooLong", "no condition interval of " + rec.subject_id + " holds a window of " +
                                  std::to_string(window_len) + " samples", "window_len");
    return ds;
}

// One nominal second of samples, half-overlapping.
inline std::pair<int, int> default_window(double sampling_rate) {
    int len = std::max(1, static_cast<int>(std::lround(sampling_rate)));
    return {len, std::max(1, len / 2)};
}

// Concatenates per-recording datasets of one modality, ordered by subject then offset.
inline WindowedDataset merge(std::vector<WindowedDataset> parts) {
    if (parts.empty()) fail("InvalidArgument", "nothing to merge");
    WindowedDataset out = parts.front();
    out.windows.clear();
    for (auto& p : parts) {
        if (!(p.modality == out.modality) || p.window_len != out.window_len || p.channels != out.channels)
            fail("InvalidArgument", "datasets disagree on modality or window length", "windows");
        for (auto& w : p.windows) out.windows.push_back(std::move(w));
    }
    std::stable_sort(out.windows.begin(), out.windows.end(), [](const Window& a, const Window& b) {
        if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
        return a.source_offset < b.source_offset;
    });
    return out;
}

// Per-channel statistics over the windows listed in `stats_source`.
inline NormStats fit_normalization(const WindowedDataset& ds, NormScheme scheme,
                                   const std::vector<std::size_t>& stats_source) {
    NormStats st;
    st.scheme = scheme;
    if (scheme == NormScheme::None) return st;
    if (stats_source.empty()) fail("InvalidArgument", "empty statistics split", "stats_source");
    const int C = ds.channels;
    const int L = ds.window_len;
    st.center.assign(C, 0.0);
    st.scale.assign(C, 1.0);
    for (int c = 0; c < C; ++c) {
        if (scheme == NormScheme::ZScore) {
            double sum = 0.0;
            double lo = ds.windows[stats_source.front()].at(c, 0);
            double hi = lo;
            for (auto i : stats_source)
                for (int t = 0; t < L; ++t) {
                    const double v = ds.windows[i].at(c, t);
                    sum += v;
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            const double count = static_cast<double>(stats_source.size()) * L;
            // A constant channel is centred exactly so it maps to 0.
            const double mean = lo == hi ? lo : sum / count;
            double ss = 0.0;
            for (auto i : stats_source)
                for (int t = 0; t < L; ++t) {
                    double d = ds.windows[i].at(c, t) - mean;
                    ss += d * d;
                }
            st.center[c] = mean;
            st.scale[c] = std::max(std::sqrt(ss / count), 1e-8);
        } else {
            double lo = ds.windows[stats_source.front()].at(c, 0);
            double hi = lo;
            for (auto i : stats_source)
                for (int t = 0; t < L; ++t) {
                    lo = std::min(lo, ds.windows[i].at(c, t));
                    hi = std::max(hi, ds.windows[i].at(c, t));
                }
            st.center[c] = lo;
            // Constant channels map to 0.
            st.scale[c] = hi > lo ? hi - lo : 1.0;
        }
    }
    return st;
}

inline WindowedDataset apply_normalization(WindowedDataset ds, const NormStats& stats) {
    for (auto& w : ds.windows) stats.apply(w.data, ds.channels, ds.window_len);
    ds.normalization = stats;
    return ds;
}

// Statistics come only from `stats_source` (the training split); every window is transformed.
inline WindowedDataset normalize(const WindowedDataset& ds, NormScheme scheme,
                                 const std::vector<std::size_t>& stats_source) {
    return apply_normalization(ds, fit_normalization(ds, scheme, stats_source));
}

inline WindowedDataset normalize(const WindowedDataset& ds, NormScheme scheme) {
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return normalize(ds, scheme, all);
}

// ---------------------------------------------------------------------------
// dataset.bin: "STDS" magic, u32 version, u64 header length, JSON header,
// then every window's samples as raw little-endian float64 in header order.

inline void save_dataset(const WindowedDataset& ds, const std::string& path) {
    nlohmann::json h;
    h["modality"] = ds.modality.name();
    h["class_scheme"] = std::string(to_string(ds.class_scheme));
    h["channels"] = ds.channels;
    h["window_len"] = ds.window_len;
    h["sampling_rate_hz"] = ds.sampling_rate;
    h["normalization"] = {{"scheme", std::string(to_string(ds.normalization.scheme))},
                          {"center", ds.normalization.center},
                          {"scale", ds.normalization.scale}};
    auto& ws = h["windows"] = nlohmann::json::array();
    for (const auto& w : ds.windows)
        ws.push_back({{"subject", w.subject_id},
                      {"label", static_cast<int>(w.label)},
                      {"offset", w.source_offset},
                      {"sample_id", w.sample_id}});
    const std::string header = h.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("IoError", "cannot write " + path, path);
    out.write("STDS", 4);
    const std::uint32_t version = 1;
    const std::uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& w : ds.windows)
        out.write(reinterpret_cast<const char*>(w.data.data()),
                  static_cast<std::streamsize>(w.data.size() * sizeof(double)));
}

inline WindowedDataset load_dataset(const std::string& path) {
    const std::string bytes = detail::slurp(path);
    if (bytes.size() < 16 || bytes.compare(0, 4, "STDS") != 0) fail("MalformedDataset", "bad magic", path);
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    std::memcpy(&version, bytes.data() + 4, sizeof version);
    std::memcpy(&len, bytes.data() + 8, sizeof len);
    if (version != 1) fail("MalformedDataset", "unsupported version " + std::to_string(version), path);
    if (16 + len > bytes.size()) fail("MalformedDataset", "truncated header", path);
    const auto h = nlohmann::json::parse(bytes.substr(16, len));
    WindowedDataset ds;
    ds.modality = SensorModality::parse(h.at("modality").get<std::string>());
    ds.class_scheme = parse_scheme(h.at("class_scheme").get<std::string>());
    ds.channels = h.at("channels").get<int>();
    ds.window_len = h.at("window_len").get<int>();
    ds.sampling_rate = h.at("sampling_rate_hz").get<double>();
    ds.normalization.scheme = parse_norm(h.at("normalization").at("scheme").get<std::string>());
    ds.normalization.center = h.at("normalization").at("center").get<std::vector<double>>();
    ds.normalization.scale = h.at("normalization").at("scale").get<std::vector<double>>();
    const std::size_t frame = static_cast<std::size_t>(ds.channels) * ds.window_len;
    std::size_t pos = 16 + len;
    for (const auto& wj : h.at("windows")) {
        if (pos + frame * sizeof(double) > bytes.size()) fail("MalformedDataset", "truncated samples", path);
        Window w;
        w.subject_id = wj.at("subject").get<std::string>();
        w.label = static_cast<AffectClass>(wj.at("label").get<int>());
        w.source_offset = wj.at("offset").get<std::int64_t>();
        w.sample_id = wj.at("sample_id").get<std::string>();
        w.modality = ds.modality;
        w.channels = ds.channels;
        w.length = ds.window_len;
        w.data.resize(frame);
        std::memcpy(w.data.data(), bytes.data() + pos, frame * sizeof(double));
        pos += frame * sizeof(double);
        ds.windows.push_back(std::move(w));
    }
    return ds;
}

}  // namespace stress
