#include "tsprobe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "tsprobe/errors.hpp"
#include "tsprobe/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsprobe::dataset {

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }
std::string to_string(RenderStyle s) { return s == RenderStyle::line ? "line" : "spectrogram"; }
std::string to_string(NanPolicy p) {
    switch (p) {
        case NanPolicy::reject: return "reject";
        case NanPolicy::forward_fill: return "forward_fill";
        case NanPolicy::zero_fill: return "zero_fill";
    }
    return "reject";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split: " + s);
}

RenderStyle render_style_from_string(const std::string& s) {
    if (s == "line") return RenderStyle::line;
    if (s == "spectrogram") return RenderStyle::spectrogram;
    throw ConfigError("unknown render style: " + s);
}

NanPolicy nan_policy_from_string(const std::string& s) {
    if (s == "reject") return NanPolicy::reject;
    if (s == "forward_fill") return NanPolicy::forward_fill;
    if (s == "zero_fill") return NanPolicy::zero_fill;
    throw ConfigError("unknown NaN policy: " + s);
}

std::vector<char> option_letters(int num_classes) {
    if (num_classes < 1 || num_classes > 26)
        throw DomainError("option_letters: need 1..26 classes, got " + std::to_string(num_classes));
    std::vector<char> out;
    for (int i = 0; i < num_classes; ++i) out.push_back(static_cast<char>('A' + i));
    return out;
}

std::vector<float> TimeSeriesDataset::sample_copy(int i) const {
    const float* p = sample(i);
    return std::vector<float>(p, p + static_cast<size_t>(num_channels) * length);
}

std::string DatasetManifest::to_json() const {
    json j;
    j["id"] = id;
    for (const auto& [name, sh] : shapes)
        j["shapes"][name] = {{"n", sh.num_samples}, {"v", sh.num_channels}, {"t", sh.length}};
    j["checksums"] = checksums;
    j["class_names"] = class_names;
    j["channel_names"] = channel_names;
    if (sample_rate_hz) j["sample_rate_hz"] = *sample_rate_hz;
    j["render_style"] = to_string(render_style);
    j["nan_policy"] = nan_policy;
    j["padded_samples"] = padded_samples;
    j["provenance"] = provenance;
    return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
    json j = json::parse(text);
    DatasetManifest m;
    m.id = j.at("id").get<std::string>();
    for (auto& [name, sh] : j.at("shapes").items()) {
        SplitShape s;
        s.num_samples = sh.at("n").get<int>();
        s.num_channels = sh.at("v").get<int>();
        s.length = sh.at("t").get<int>();
        m.shapes[name] = s;
    }
    m.checksums = j.at("checksums").get<std::map<std::string, std::string>>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    if (j.contains("sample_rate_hz")) m.sample_rate_hz = j["sample_rate_hz"].get<double>();
    m.render_style = render_style_from_string(j.at("render_style").get<std::string>());
    m.nan_policy = j.at("nan_policy").get<std::string>();
    m.padded_samples = j.value("padded_samples", 0);
    m.provenance = j.value("provenance", "");
    return m;
}

namespace {

// Applies the NaN policy in place over one channel row. Returns the number of
// repaired entries; throws IngestValueError under reject or on values the
// policy cannot repair (inf, leading NaN under forward_fill).
int apply_nan_policy(float* row, int len, NanPolicy policy) {
    int repaired = 0;
    for (int t = 0; t < len; ++t) {
        float v = row[t];
        if (std::isfinite(v)) continue;
        if (std::isinf(v)) throw IngestValueError("non-finite value (inf) in input series");
        switch (policy) {
            case NanPolicy::reject:
                throw IngestValueError("NaN in input series under policy=reject");
            case NanPolicy::forward_fill:
                if (t == 0) throw IngestValueError("NaN at series start under policy=forward_fill");
                row[t] = row[t - 1];
                ++repaired;
                break;
            case NanPolicy::zero_fill:
                row[t] = 0.0f;
                ++repaired;
                break;
        }
    }
    return repaired;
}

std::string labels_csv(const std::vector<std::string>& ids, const std::vector<int>& labels) {
    std::ostringstream ss;
    ss << "sample_id,label\n";
    for (size_t i = 0; i < ids.size(); ++i) ss << ids[i] << ',' << labels[i] << '\n';
    return ss.str();
}

void parse_labels_csv(const std::string& text, std::vector<std::string>& ids,
                      std::vector<int>& labels) {
    std::istringstream in(text);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        line = util::trim(line);
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line != "sample_id,label")
                throw CorruptStoreError("labels csv header mismatch: " + line);
            continue;
        }
        auto parts = util::split(line, ',');
        if (parts.size() != 2) throw CorruptStoreError("bad labels csv row: " + line);
        ids.push_back(parts[0]);
        labels.push_back(std::stoi(parts[1]));
    }
}

}  // namespace

DatasetManifest DatasetStore::ingest(const std::vector<SourceTable>& tables,
                                     const IngestMeta& meta) {
    if (meta.id.empty()) throw ConfigError("ingest: empty dataset id");
    if (meta.num_channels < 1 || meta.length < 1)
        throw IngestShapeError("ingest: V and T must be positive");
    const int C = static_cast<int>(meta.class_names.size());
    if (C < 1) throw IngestLabelError("ingest: empty class list");
    option_letters(C);  // validates C <= 26

    DatasetManifest manifest;
    manifest.id = meta.id;
    manifest.class_names = meta.class_names;
    manifest.channel_names = meta.channel_names;
    if (manifest.channel_names.empty())
        for (int v = 1; v <= meta.num_channels; ++v)
            manifest.channel_names.push_back("ch" + std::to_string(v));
    if (static_cast<int>(manifest.channel_names.size()) != meta.num_channels)
        throw IngestShapeError("ingest: channel_names size != V");
    manifest.sample_rate_hz = meta.sample_rate_hz;
    manifest.render_style = meta.render_style;
    manifest.nan_policy = to_string(meta.nan_policy);
    manifest.provenance = meta.provenance;

    fs::path dir = dataset_dir(meta.id);
    fs::create_directories(dir);

    std::set<std::string> seen_splits;
    for (const auto& table : tables) {
        std::string split_name = to_string(table.split);
        if (!seen_splits.insert(split_name).second)
            throw IngestShapeError("ingest: duplicate split " + split_name);
        const int n = static_cast<int>(table.sequences.size());
        if (n == 0) throw IngestShapeError("ingest: empty split " + split_name);
        if (table.labels.size() != table.sequences.size() ||
            table.lengths.size() != table.sequences.size())
            throw IngestShapeError("ingest: labels/lengths size mismatch in " + split_name);

        std::vector<float> x(static_cast<size_t>(n) * meta.num_channels * meta.length);
        std::vector<std::string> ids;
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) {
            int ti = table.lengths[i];
            if (ti < 1 || ti > meta.length)
                throw IngestShapeError("ingest: sample " + std::to_string(i) + " length " +
                                       std::to_string(ti) + " exceeds declared T " +
                                       std::to_string(meta.length));
            if (table.sequences[i].size() != static_cast<size_t>(meta.num_channels) * ti)
                throw IngestShapeError("ingest: sample " + std::to_string(i) +
                                       " value count != V*T_i");
            int label = table.labels[i];
            if (label < 1 || label > C)
                throw IngestLabelError("ingest: label " + std::to_string(label) +
                                       " outside 1.." + std::to_string(C));
            labels.push_back(label);
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "%s-%05d", split_name.c_str(), i);
            ids.emplace_back(idbuf);

            bool padded = ti < meta.length;
            for (int v = 0; v < meta.num_channels; ++v) {
                float* dst = x.data() +
                             (static_cast<size_t>(i) * meta.num_channels + v) * meta.length;
                const float* src = table.sequences[i].data() + static_cast<size_t>(v) * ti;
                std::copy(src, src + ti, dst);
                apply_nan_policy(dst, ti, meta.nan_policy);
                // pad-right with the final observed value
                for (int t = ti; t < meta.length; ++t) dst[t] = dst[ti - 1];
            }
            if (padded) ++manifest.padded_samples;
        }

        manifest.shapes[split_name] = SplitShape{n, meta.num_channels, meta.length};

        fs::path blob = dir / (split_name + ".f32");
        util::write_f32_blob(blob, x);
        manifest.checksums[split_name + ".f32"] = util::sha256_file_hex(blob);

        fs::path lab = dir / (split_name + ".labels.csv");
        util::atomic_write(lab, labels_csv(ids, labels));
        manifest.checksums[split_name + ".labels.csv"] = util::sha256_file_hex(lab);
    }

    util::atomic_write(dir / "manifest.json", manifest.to_json());
    return manifest;
}

DatasetManifest DatasetStore::manifest(const std::string& id) const {
    fs::path p = dataset_dir(id) / "manifest.json";
    if (!fs::exists(p)) throw NotFoundError("dataset not found: " + id);
    return DatasetManifest::from_json(util::read_file(p));
}

TimeSeriesDataset DatasetStore::load_split(const std::string& id, Split split) const {
    DatasetManifest m = manifest(id);
    std::string split_name = to_string(split);
    auto it = m.shapes.find(split_name);
    if (it == m.shapes.end())
        throw NotFoundError("dataset " + id + " has no split " + split_name);
    const SplitShape& sh = it->second;

    fs::path dir = dataset_dir(id);
    for (const std::string& file : {split_name + ".f32", split_name + ".labels.csv"}) {
        auto want = m.checksums.find(file);
        if (want == m.checksums.end())
            throw CorruptStoreError("manifest missing checksum for " + file);
        std::string got = util::sha256_file_hex(dir / file);
        if (got != want->second)
            throw CorruptStoreError("checksum mismatch for " + (dir / file).string());
    }

    TimeSeriesDataset d;
    d.id = id;
    d.split = split;
    d.num_samples = sh.num_samples;
    d.num_channels = sh.num_channels;
    d.length = sh.length;
    d.x = util::read_f32_blob(dir / (split_name + ".f32"));
    if (d.x.size() != static_cast<size_t>(sh.num_samples) * sh.num_channels * sh.length)
        throw CorruptStoreError("tensor size does not match declared shape for " + id);
    parse_labels_csv(util::read_file(dir / (split_name + ".labels.csv")), d.sample_ids, d.y);
    if (static_cast<int>(d.y.size()) != sh.num_samples)
        throw CorruptStoreError("label count != N for " + id);
    d.class_names = m.class_names;
    d.letters = option_letters(static_cast<int>(m.class_names.size()));
    d.channel_names = m.channel_names;
    d.sample_rate_hz = m.sample_rate_hz;
    d.render_style = m.render_style;
    for (int label : d.y)
        if (label < 1 || label > d.num_classes())
            throw CorruptStoreError("stored label out of range for " + id);
    return d;
}

DatasetStore::Description DatasetStore::describe(const std::string& id) const {
    Description desc;
    desc.manifest = manifest(id);
    for (const auto& [split_name, shape] : desc.manifest.shapes) {
        TimeSeriesDataset d = load_split(id, split_from_string(split_name));
        std::map<int, int>& balance = desc.class_balance[split_name];
        for (int c = 1; c <= d.num_classes(); ++c) balance[c] = 0;
        for (int label : d.y) ++balance[label];
        (void)shape;
    }
    return desc;
}

SourceTable read_source_csv(const fs::path& csv, const IngestMeta& meta, Split split) {
    std::ifstream in(csv);
    if (!in) throw NotFoundError("cannot open csv: " + csv.string());
    SourceTable table;
    table.split = split;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = util::trim(line);
        if (line.empty()) continue;
        auto fields = util::split(line, ',');
        if (lineno == 1 && !fields.empty()) {
            // optional header: first cell not a number and not a known class
            const std::string head = util::lower(util::trim(fields[0]));
            if (head == "label" || head == "class") continue;
        }
        if (fields.size() < 2) throw IngestShapeError("csv row " + std::to_string(lineno) + ": too few fields");
        std::string label_str = util::trim(fields[0]);
        int label = -1;
        auto found = std::find(meta.class_names.begin(), meta.class_names.end(), label_str);
        if (found != meta.class_names.end()) {
            label = static_cast<int>(found - meta.class_names.begin()) + 1;
        } else {
            try {
                size_t used = 0;
                label = std::stoi(label_str, &used);
                if (used != label_str.size()) label = -1;
            } catch (...) {
                label = -1;
            }
            if (label < 1 || label > static_cast<int>(meta.class_names.size()))
                throw IngestLabelError("csv row " + std::to_string(lineno) + ": unknown label '" +
                                       label_str + "'");
        }
        std::vector<float> vals;
        vals.reserve(fields.size() - 1);
        for (size_t i = 1; i < fields.size(); ++i) {
            std::string f = util::trim(fields[i]);
            if (f.empty() || f == "nan" || f == "NaN" || f == "NA") {
                vals.push_back(std::nanf(""));
                continue;
            }
            vals.push_back(std::stof(f));
        }
        if (vals.size() % static_cast<size_t>(meta.num_channels) != 0)
            throw IngestShapeError("csv row " + std::to_string(lineno) +
                                   ": value count not divisible by V");
        table.sequences.push_back(std::move(vals));
        table.lengths.push_back(static_cast<int>(table.sequences.back().size()) / meta.num_channels);
        table.labels.push_back(label);
    }
    return table;
}

}  // namespace tsprobe::dataset
