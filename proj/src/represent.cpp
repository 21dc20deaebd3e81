#include "tsprobe/represent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "tsprobe/errors.hpp"

namespace tsprobe::represent {

const char* kRendererVersion = "tsprobe-render/1+opencv-" CV_VERSION;
const char* kSerializerVersion = "tsprobe-digits/1";

std::string to_string(ModalityKind m) {
    switch (m) {
        case ModalityKind::d: return "d";
        case ModalityKind::v: return "v";
        case ModalityKind::d_plus_v: return "d+v";
    }
    return "d";
}

ModalityKind modality_from_string(const std::string& s) {
    if (s == "d") return ModalityKind::d;
    if (s == "v") return ModalityKind::v;
    if (s == "d+v" || s == "dv" || s == "d_plus_v") return ModalityKind::d_plus_v;
    throw ConfigError("unknown modality: " + s);
}

void SerializationConfig::validate() const {
    if (precision < 0) throw ConfigError("serialization: precision must be >= 0");
    if (digit_separator.empty() || timestep_separator.empty())
        throw ConfigError("serialization: separators must be non-empty");
    if (prescale_scale && *prescale_scale == 0.0)
        throw ConfigError("serialization: prescale must be invertible (scale != 0)");
    if (stride < 1) throw ConfigError("serialization: stride must be >= 1");
}

std::string SerializationConfig::version_tag() const {
    std::ostringstream ss;
    ss << kSerializerVersion << ";p=" << precision << ";stride=" << stride;
    if (prescale_scale) ss << ";scale=" << *prescale_scale << ";offset=" << prescale_offset;
    return ss.str();
}

void RenderConfig::validate() const {
    if (width_px < 64 || height_px < 64) throw ConfigError("render: image too small");
    if (subplot_threshold < 1) throw ConfigError("render: subplot_threshold must be >= 1");
    if (overlap < 0.0 || overlap >= 1.0) throw ConfigError("render: overlap must be in [0,1)");
    if (window < 2) throw ConfigError("render: window must be >= 2");
}

bool Representation::invariants_hold() const {
    switch (modality) {
        case ModalityKind::d: return text.has_value() && images.empty();
        case ModalityKind::v: return !text.has_value() && !images.empty();
        case ModalityKind::d_plus_v: return text.has_value() && !images.empty();
    }
    return false;
}

std::string serialize_value(double value, const SerializationConfig& config) {
    if (!std::isfinite(value)) throw SerializeValueError("non-finite value in series");
    if (config.prescale_scale) value = value * *config.prescale_scale + config.prescale_offset;
    if (std::abs(value) >= 1e12)
        throw SerializeValueError("value magnitude >= 1e12 after scaling");

    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", config.precision, value);
    std::string out;
    bool first = true;
    for (const char* p = buf; *p; ++p) {
        if (*p == '.') continue;
        if (!first) out += config.digit_separator;
        if (*p == '-') out += config.sign_token;
        else out.push_back(*p);
        first = false;
    }
    return out;
}

std::string serialize_digits(const std::vector<float>& series, const SerializationConfig& config) {
    config.validate();
    std::string out;
    bool first = true;
    for (size_t t = 0; t < series.size(); t += static_cast<size_t>(config.stride)) {
        if (!first) out += config.timestep_separator;
        out += serialize_value(series[t], config);
        first = false;
    }
    return out;
}

std::string serialize_digits_multichannel(const std::vector<float>& sample, int num_channels,
                                          int length,
                                          const std::vector<std::string>& channel_names,
                                          const SerializationConfig& config) {
    config.validate();
    if (num_channels == 1) {
        std::vector<float> row(sample.begin(), sample.begin() + length);
        return serialize_digits(row, config);
    }
    std::string out;
    for (int v = 0; v < num_channels; ++v) {
        std::vector<float> row(sample.begin() + static_cast<size_t>(v) * length,
                               sample.begin() + static_cast<size_t>(v + 1) * length);
        std::string name = (v < static_cast<int>(channel_names.size()))
                               ? channel_names[static_cast<size_t>(v)]
                               : "ch" + std::to_string(v + 1);
        if (v > 0) out += "\n";
        out += name + ": " + serialize_digits(row, config);
    }
    return out;
}

namespace {

const cv::Scalar kWhite(255, 255, 255);
const cv::Scalar kBlack(30, 30, 30);
const cv::Scalar kGrid(210, 210, 210);

// fixed BGR palette; repeats after 8 channels
const std::vector<cv::Scalar>& palette() {
    static const std::vector<cv::Scalar> p = {
        {180, 119, 31},  {14, 127, 255},  {44, 160, 44},  {40, 39, 214},
        {189, 103, 148}, {75, 86, 140},   {194, 119, 227}, {127, 127, 127},
    };
    return p;
}

std::string format_tick(double v) {
    char buf[32];
    double a = std::abs(v);
    if (v == 0.0) return "0";
    if (a >= 1e5 || a < 1e-3) std::snprintf(buf, sizeof(buf), "%.1e", v);
    else if (a >= 100.0) std::snprintf(buf, sizeof(buf), "%.0f", v);
    else std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

void draw_axes_box(cv::Mat& img, const cv::Rect& area) {
    cv::rectangle(img, area, kBlack, 1, cv::LINE_8);
}

std::vector<uint8_t> encode_png(const cv::Mat& img) {
    std::vector<uint8_t> buf;
    if (!cv::imencode(".png", img, buf)) throw RenderError("PNG encoding failed");
    return buf;
}

}  // namespace

int stft_hop(int window, double overlap) {
    int hop = static_cast<int>(std::lround(window * (1.0 - overlap)));
    return std::max(1, hop);
}

int stft_frame_count(int n, int window, double overlap) {
    if (window > n) return 0;
    return (n - window) / stft_hop(window, overlap) + 1;
}

StftResult stft_magnitude(const std::vector<float>& series, int window, double overlap) {
    const int n = static_cast<int>(series.size());
    if (window > n) throw RenderError("spectrogram window exceeds series length");
    StftResult r;
    r.num_frames = stft_frame_count(n, window, overlap);
    r.num_bins = window / 2 + 1;
    r.magnitude.assign(static_cast<size_t>(r.num_frames) * r.num_bins, 0.0);
    const int hop = stft_hop(window, overlap);

    std::vector<double> hann(static_cast<size_t>(window));
    for (int i = 0; i < window; ++i)
        hann[static_cast<size_t>(i)] =
            0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (window - 1));

    // plain DFT per frame; window sizes here are small enough that this is fine
    std::vector<double> frame(static_cast<size_t>(window));
    for (int f = 0; f < r.num_frames; ++f) {
        const int start = f * hop;
        for (int i = 0; i < window; ++i)
            frame[static_cast<size_t>(i)] =
                static_cast<double>(series[static_cast<size_t>(start + i)]) *
                hann[static_cast<size_t>(i)];
        for (int k = 0; k < r.num_bins; ++k) {
            double re = 0.0, im = 0.0;
            const double w = -2.0 * std::numbers::pi * k / window;
            for (int i = 0; i < window; ++i) {
                re += frame[static_cast<size_t>(i)] * std::cos(w * i);
                im += frame[static_cast<size_t>(i)] * std::sin(w * i);
            }
            r.magnitude[static_cast<size_t>(f) * r.num_bins + k] = std::hypot(re, im);
        }
    }
    return r;
}

std::vector<uint8_t> render_spectrogram(const std::vector<float>& series,
                                        const RenderConfig& config) {
    config.validate();
    if (series.empty()) throw RenderError("empty series");
    for (float v : series)
        if (!std::isfinite(v)) throw RenderError("non-finite value in series");

    StftResult stft = stft_magnitude(series, config.window, config.overlap);

    // map magnitudes to [0,1]
    std::vector<double> scaled(stft.magnitude.size());
    double lo = 0.0, hi = 1.0;
    if (config.log_magnitude) {
        lo = config.floor_db;
        hi = config.floor_db;
        for (size_t i = 0; i < stft.magnitude.size(); ++i) {
            double db = 20.0 * std::log10(stft.magnitude[i] + 1e-12);
            db = std::max(db, config.floor_db);
            scaled[i] = db;
            hi = std::max(hi, db);
        }
    } else {
        hi = 0.0;
        for (size_t i = 0; i < stft.magnitude.size(); ++i) {
            scaled[i] = stft.magnitude[i];
            hi = std::max(hi, scaled[i]);
        }
    }
    const double range = (hi > lo) ? (hi - lo) : 1.0;

    cv::Mat cells(stft.num_bins, stft.num_frames, CV_8UC1);
    for (int f = 0; f < stft.num_frames; ++f) {
        for (int k = 0; k < stft.num_bins; ++k) {
            double u = (scaled[static_cast<size_t>(f) * stft.num_bins + k] - lo) / range;
            // frequency axis vertical, low at the bottom row
            cells.at<uint8_t>(stft.num_bins - 1 - k, f) =
                static_cast<uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0));
        }
    }
    cv::Mat colored;
    cv::applyColorMap(cells, colored, cv::COLORMAP_VIRIDIS);

    cv::Mat img(config.height_px, config.width_px, CV_8UC3, kWhite);
    const int ml = 64, mr = 16, mt = 36, mb = 44;
    cv::Rect area(ml, mt, config.width_px - ml - mr, config.height_px - mt - mb);
    cv::Mat resized;
    cv::resize(colored, resized, area.size(), 0, 0, cv::INTER_NEAREST);
    resized.copyTo(img(area));
    draw_axes_box(img, area);

    std::string title = config.title.empty() ? "Spectrogram" : config.title;
    cv::putText(img, title, {ml, 24}, cv::FONT_HERSHEY_SIMPLEX, 0.55, kBlack, 1, cv::LINE_8);
    cv::putText(img, "time frame", {ml + area.width / 2 - 40, config.height_px - 14},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, kBlack, 1, cv::LINE_8);
    cv::putText(img, "freq bin", {4, mt + 14}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kBlack, 1,
                cv::LINE_8);
    cv::putText(img, "0", {ml - 18, area.y + area.height}, cv::FONT_HERSHEY_SIMPLEX, 0.4, kBlack,
                1, cv::LINE_8);
    cv::putText(img, std::to_string(stft.num_bins - 1), {ml - 36, area.y + 12},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, kBlack, 1, cv::LINE_8);
    return encode_png(img);
}

namespace {

void draw_panel(cv::Mat& img, const cv::Rect& area, const std::vector<float>& sample,
                int num_channels, int length, int first_channel, int channels_here,
                const RenderConfig& config, const std::vector<std::string>& channel_names) {
    // y-range over the channels shown in this panel
    float lo = sample[static_cast<size_t>(first_channel) * length];
    float hi = lo;
    for (int v = first_channel; v < first_channel + channels_here; ++v) {
        for (int t = 0; t < length; ++t) {
            float val = sample[static_cast<size_t>(v) * length + t];
            lo = std::min(lo, val);
            hi = std::max(hi, val);
        }
    }
    if (hi <= lo) {
        hi = lo + 1.0f;
        lo = lo - 1.0f;
    }
    const double yr = static_cast<double>(hi) - lo;

    auto to_px = [&](int t, float val) {
        double fx = (length > 1) ? static_cast<double>(t) / (length - 1) : 0.5;
        double fy = (static_cast<double>(val) - lo) / yr;
        return cv::Point(area.x + static_cast<int>(std::lround(fx * (area.width - 1))),
                         area.y + area.height - 1 -
                             static_cast<int>(std::lround(fy * (area.height - 1))));
    };

    // light horizontal gridlines at quartiles
    for (int g = 1; g <= 3; ++g) {
        int gy = area.y + area.height * g / 4;
        cv::line(img, {area.x, gy}, {area.x + area.width - 1, gy}, kGrid, 1, cv::LINE_8);
    }
    draw_axes_box(img, area);

    for (int v = first_channel; v < first_channel + channels_here; ++v) {
        const cv::Scalar& color = palette()[static_cast<size_t>(v) % palette().size()];
        std::vector<cv::Point> pts;
        pts.reserve(static_cast<size_t>(length));
        for (int t = 0; t < length; ++t)
            pts.push_back(to_px(t, sample[static_cast<size_t>(v) * length + t]));
        if (pts.size() == 1) cv::circle(img, pts[0], 2, color, cv::FILLED, cv::LINE_8);
        else cv::polylines(img, pts, false, color, 1, cv::LINE_8);
    }

    // y tick labels: min and max
    cv::putText(img, format_tick(hi), {4, area.y + 12}, cv::FONT_HERSHEY_SIMPLEX, 0.38, kBlack, 1,
                cv::LINE_8);
    cv::putText(img, format_tick(lo), {4, area.y + area.height - 2}, cv::FONT_HERSHEY_SIMPLEX,
                0.38, kBlack, 1, cv::LINE_8);

    const bool want_legend = config.legend && (num_channels > 1);
    if (want_legend) {
        int lx = area.x + area.width - 130;
        int ly = area.y + 8;
        for (int v = first_channel; v < first_channel + channels_here; ++v) {
            const cv::Scalar& color = palette()[static_cast<size_t>(v) % palette().size()];
            cv::line(img, {lx, ly + 4}, {lx + 18, ly + 4}, color, 2, cv::LINE_8);
            std::string name = (v < static_cast<int>(channel_names.size()))
                                   ? channel_names[static_cast<size_t>(v)]
                                   : "ch" + std::to_string(v + 1);
            cv::putText(img, name, {lx + 24, ly + 8}, cv::FONT_HERSHEY_SIMPLEX, 0.38, kBlack, 1,
                        cv::LINE_8);
            ly += 14;
        }
    }
}

}  // namespace

std::vector<uint8_t> render_line_plot(const std::vector<float>& sample, int num_channels,
                                      int length, const RenderConfig& config,
                                      const std::vector<std::string>& channel_names) {
    config.validate();
    if (num_channels < 1 || length < 1) throw RenderError("empty series");
    if (sample.size() != static_cast<size_t>(num_channels) * length)
        throw RenderError("sample size does not match V*T");
    for (float v : sample)
        if (!std::isfinite(v)) throw RenderError("non-finite value in series");

    const int panels = (num_channels + config.subplot_threshold - 1) / config.subplot_threshold;
    cv::Mat img(config.height_px, config.width_px, CV_8UC3, kWhite);

    const int ml = 62, mr = 14, mt = 34, mb = 42, gap = 10;
    const int total_h = config.height_px - mt - mb;
    const int panel_h = (total_h - gap * (panels - 1)) / panels;
    if (panel_h < 32) throw RenderError("too many panels for image height");

    for (int p = 0; p < panels; ++p) {
        int first = p * config.subplot_threshold;
        int here = std::min(config.subplot_threshold, num_channels - first);
        cv::Rect area(ml, mt + p * (panel_h + gap), config.width_px - ml - mr, panel_h);
        draw_panel(img, area, sample, num_channels, length, first, here, config, channel_names);
    }

    std::string title = config.title.empty() ? "Time series" : config.title;
    cv::putText(img, title, {ml, 22}, cv::FONT_HERSHEY_SIMPLEX, 0.55, kBlack, 1, cv::LINE_8);
    cv::putText(img, config.x_label, {ml + (config.width_px - ml - mr) / 2 - 36,
                config.height_px - 14},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, kBlack, 1, cv::LINE_8);
    cv::putText(img, config.y_label, {4, mt - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kBlack, 1,
                cv::LINE_8);
    return encode_png(img);
}

Representation build_representation(const std::vector<float>& sample, int num_channels,
                                    int length, ModalityKind modality,
                                    const SerializationConfig& serial_config,
                                    const RenderConfig& render_config,
                                    const std::vector<std::string>& channel_names) {
    Representation rep;
    rep.modality = modality;
    const bool want_text = modality != ModalityKind::v;
    const bool want_image = modality != ModalityKind::d;
    if (want_text)
        rep.text = serialize_digits_multichannel(sample, num_channels, length, channel_names,
                                                 serial_config);
    if (want_image) {
        if (render_config.style == dataset::RenderStyle::spectrogram) {
            if (num_channels != 1)
                throw RenderError("spectrogram rendering requires a univariate series");
            std::vector<float> row(sample.begin(), sample.begin() + length);
            rep.images.push_back(render_spectrogram(row, render_config));
        } else {
            rep.images.push_back(
                render_line_plot(sample, num_channels, length, render_config, channel_names));
        }
    }
    return rep;
}

std::vector<float> normalize_per_channel(const std::vector<float>& sample, int num_channels,
                                         int length) {
    std::vector<float> out(sample.size());
    for (int v = 0; v < num_channels; ++v) {
        const float* src = sample.data() + static_cast<size_t>(v) * length;
        float* dst = out.data() + static_cast<size_t>(v) * length;
        double mean = 0.0;
        for (int t = 0; t < length; ++t) mean += src[t];
        mean /= length;
        double var = 0.0;
        for (int t = 0; t < length; ++t) var += (src[t] - mean) * (src[t] - mean);
        double sd = std::sqrt(var / length);
        if (sd == 0.0) sd = 1.0;
        for (int t = 0; t < length; ++t)
            dst[t] = static_cast<float>((src[t] - mean) / sd);
    }
    return out;
}

}  // namespace tsprobe::represent
