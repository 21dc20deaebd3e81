#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsprobe/dataset.hpp"

namespace tsprobe::represent {

/// Bumped whenever rendered bytes may change; recorded alongside cached
/// images and activation stores so stale caches are invalidated.
extern const char* kRendererVersion;
extern const char* kSerializerVersion;

enum class ModalityKind { d, v, d_plus_v };

std::string to_string(ModalityKind m);
ModalityKind modality_from_string(const std::string& s);

struct SerializationConfig {
    int precision = 2;                    // decimal places before the point is dropped
    std::string digit_separator = " ";
    std::string timestep_separator = " , ";
    std::string sign_token = "-";
    // optional affine prescale value -> value*scale + offset (scale != 0)
    std::optional<double> prescale_scale;
    double prescale_offset = 0.0;
    int stride = 1;  // take every stride-th timestep

    void validate() const;
    std::string version_tag() const;
};

struct RenderConfig {
    int width_px = 640;
    int height_px = 480;
    dataset::RenderStyle style = dataset::RenderStyle::line;
    int subplot_threshold = 3;  // max lines per panel
    bool legend = true;
    std::string title;
    std::string x_label = "time step";
    std::string y_label = "value";
    // spectrogram parameters
    int window = 256;
    double overlap = 0.5;        // fraction of window, [0, 1)
    double floor_db = -80.0;     // log-magnitude floor
    bool log_magnitude = true;

    void validate() const;
};

struct Representation {
    ModalityKind modality = ModalityKind::d;
    std::optional<std::string> text;
    std::vector<std::vector<uint8_t>> images;  // PNG blobs

    /// kind=d -> text only; kind=v -> images only; kind=d+v -> both.
    bool invariants_hold() const;
};

/// Fixed-precision digit-space serialization: each value is formatted with
/// `precision` decimal places, the decimal point is removed, and digits are
/// emitted as separate tokens. Timesteps are joined by timestep_separator.
/// Multivariate input produces one "<channel>: <digits>" line per channel.
std::string serialize_digits(const std::vector<float>& series, const SerializationConfig& config);
std::string serialize_digits_multichannel(const std::vector<float>& sample, int num_channels,
                                          int length, const std::vector<std::string>& channel_names,
                                          const SerializationConfig& config);

/// Single-value digit serialization (the per-timestep building block).
std::string serialize_value(double value, const SerializationConfig& config);

std::vector<uint8_t> render_line_plot(const std::vector<float>& sample, int num_channels,
                                      int length, const RenderConfig& config,
                                      const std::vector<std::string>& channel_names);

std::vector<uint8_t> render_spectrogram(const std::vector<float>& series,
                                        const RenderConfig& config);

/// Short-time Fourier magnitude frames (Hann window); rows = frames,
/// cols = window/2 + 1 frequency bins. Exposed for tests.
struct StftResult {
    int num_frames = 0;
    int num_bins = 0;
    std::vector<double> magnitude;  // num_frames x num_bins, row-major
};
StftResult stft_magnitude(const std::vector<float>& series, int window, double overlap);

/// Number of STFT frames for a series of length n: floor((n - window)/hop)+1
/// with hop = max(1, round(window*(1-overlap))).
int stft_frame_count(int n, int window, double overlap);
int stft_hop(int window, double overlap);

Representation build_representation(const std::vector<float>& sample, int num_channels,
                                    int length, ModalityKind modality,
                                    const SerializationConfig& serial_config,
                                    const RenderConfig& render_config,
                                    const std::vector<std::string>& channel_names);

/// Per-channel z-scoring (optional preprocessing, off by default).
std::vector<float> normalize_per_channel(const std::vector<float>& sample, int num_channels,
                                         int length);

}  // namespace tsprobe::represent
