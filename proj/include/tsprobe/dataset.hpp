#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tsprobe::dataset {

enum class Split { train, test };
enum class RenderStyle { line, spectrogram };
enum class NanPolicy { reject, forward_fill, zero_fill };

std::string to_string(Split s);
std::string to_string(RenderStyle s);
std::string to_string(NanPolicy p);
Split split_from_string(const std::string& s);
RenderStyle render_style_from_string(const std::string& s);
NanPolicy nan_policy_from_string(const std::string& s);

/// Option letters A, B, C, ... for C classes.
std::vector<char> option_letters(int num_classes);

/// Canonical labeled tensor for one split. X is row-major [N x V x T],
/// labels are 1-based (y[i] in 1..C).
struct TimeSeriesDataset {
    std::string id;
    Split split = Split::train;
    int num_samples = 0;   // N
    int num_channels = 0;  // V
    int length = 0;        // T
    std::vector<float> x;  // N*V*T, row-major
    std::vector<int> y;    // N, values 1..C
    std::vector<std::string> sample_ids;
    std::vector<std::string> class_names;  // size C
    std::vector<char> letters;             // size C, A..
    std::vector<std::string> channel_names;
    std::optional<double> sample_rate_hz;
    RenderStyle render_style = RenderStyle::line;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    const float* sample(int i) const { return x.data() + static_cast<size_t>(i) * num_channels * length; }
    std::vector<float> sample_copy(int i) const;
};

struct SplitShape {
    int num_samples = 0, num_channels = 0, length = 0;
};

struct DatasetManifest {
    std::string id;
    std::map<std::string, SplitShape> shapes;       // "train"/"test"
    std::map<std::string, std::string> checksums;   // file name -> sha256
    std::vector<std::string> class_names;
    std::vector<std::string> channel_names;
    std::optional<double> sample_rate_hz;
    RenderStyle render_style = RenderStyle::line;
    std::string nan_policy = "reject";
    int padded_samples = 0;  // ragged inputs padded to declared T
    std::string provenance;

    std::string to_json() const;
    static DatasetManifest from_json(const std::string& text);
};

/// Raw input for ingestion: per-sample [V x T_i] sequences (possibly ragged in
/// T) with labels given as class names or 1-based indices.
struct SourceTable {
    // sequences[i] is channel-major: channel v occupies [v*len_i, (v+1)*len_i)
    std::vector<std::vector<float>> sequences;
    std::vector<int> lengths;  // T_i per sample
    std::vector<int> labels;   // 1-based, already mapped onto class list
    Split split = Split::train;
};

struct IngestMeta {
    std::string id;
    int num_channels = 0;
    int length = 0;  // declared T; ragged inputs are right-padded to this
    std::vector<std::string> class_names;
    std::vector<std::string> channel_names;  // optional; defaults ch1..chV
    std::optional<double> sample_rate_hz;
    RenderStyle render_style = RenderStyle::line;
    NanPolicy nan_policy = NanPolicy::reject;
    std::string provenance;
};

class DatasetStore {
public:
    explicit DatasetStore(std::filesystem::path root) : root_(std::move(root)) {}

    /// Writes data/<id>/{manifest.json, <split>.f32, <split>.labels.csv} for
    /// every split present in `tables`. Idempotent for identical input.
    DatasetManifest ingest(const std::vector<SourceTable>& tables, const IngestMeta& meta);

    TimeSeriesDataset load_split(const std::string& id, Split split) const;
    DatasetManifest manifest(const std::string& id) const;

    struct Description {
        DatasetManifest manifest;
        // split name -> class index (1-based) -> count
        std::map<std::string, std::map<int, int>> class_balance;
    };
    Description describe(const std::string& id) const;

    std::filesystem::path dataset_dir(const std::string& id) const { return root_ / id; }
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
};

/// CSV ingestion used by the CLI: one row per sample, first column the label
/// (class name or 1-based index), then V*T values channel-major. Header row
/// optional. Ragged rows allowed when shorter than V*T by whole timesteps.
SourceTable read_source_csv(const std::filesystem::path& csv, const IngestMeta& meta, Split split);

}  // namespace tsprobe::dataset
