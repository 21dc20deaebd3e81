#include "tsprobe/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <set>
#include <sstream>

#include "tsprobe/errors.hpp"
#include "tsprobe/tsne.hpp"
#include "tsprobe/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsprobe::report {

std::string to_string(TableLayout l) {
    switch (l) {
        case TableLayout::main: return "main";
        case TableLayout::modality_split: return "modality_split";
        case TableLayout::ablation: return "ablation";
        case TableLayout::stability: return "stability";
    }
    return "main";
}

TableLayout layout_from_string(const std::string& s) {
    if (s == "main") return TableLayout::main;
    if (s == "modality_split") return TableLayout::modality_split;
    if (s == "ablation") return TableLayout::ablation;
    if (s == "stability") return TableLayout::stability;
    throw ConfigError("unknown table layout: " + s);
}

namespace {

std::string fmt_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

struct CellRef {
    double value = 0.0;
    std::string provenance;  // cell key or "imported"
    bool present = false;
};

struct TableRow {
    std::string group;                    // visual grouping label
    std::vector<std::string> head;        // leading columns
    std::map<std::string, CellRef> cells; // dataset -> cell
};

struct TableDoc {
    std::vector<std::string> head_names;
    std::vector<std::string> dataset_cols;
    std::vector<TableRow> rows;
    std::vector<std::string> warnings;

    std::string to_csv() const {
        std::ostringstream ss;
        for (size_t i = 0; i < head_names.size(); ++i) ss << (i ? "," : "") << head_names[i];
        for (const auto& ds : dataset_cols) ss << ',' << ds << ',' << ds << "_cell";
        ss << ",avg\n";
        for (const auto& row : rows) {
            for (size_t i = 0; i < row.head.size(); ++i)
                ss << (i ? "," : "") << util::csv_escape(row.head[i]);
            double sum = 0.0;
            int count = 0;
            for (const auto& ds : dataset_cols) {
                auto it = row.cells.find(ds);
                if (it == row.cells.end() || !it->second.present) {
                    ss << ",,";
                    continue;
                }
                ss << ',' << util::fmt_double(it->second.value) << ','
                   << util::csv_escape(it->second.provenance);
                sum += it->second.value;
                ++count;
            }
            ss << ',' << (count ? util::fmt_double(sum / count) : "") << '\n';
        }
        return ss.str();
    }

    std::string to_markdown(const std::string& title) const {
        std::ostringstream ss;
        ss << "# " << title << "\n\n|";
        for (const auto& h : head_names) ss << ' ' << h << " |";
        for (const auto& ds : dataset_cols) ss << ' ' << ds << " |";
        ss << " Avg |\n|";
        for (size_t i = 0; i < head_names.size() + dataset_cols.size() + 1; ++i) ss << "---|";
        ss << '\n';
        std::string last_group;
        for (const auto& row : rows) {
            ss << '|';
            for (const auto& h : row.head) ss << ' ' << h << " |";
            double sum = 0.0;
            int count = 0;
            for (const auto& ds : dataset_cols) {
                auto it = row.cells.find(ds);
                if (it == row.cells.end() || !it->second.present) {
                    ss << "  |";
                    continue;
                }
                ss << ' ' << fmt_score(it->second.value) << " |";
                sum += it->second.value;
                ++count;
            }
            ss << (count ? ' ' + fmt_score(sum / count) + " |" : "  |") << '\n';
        }
        if (!warnings.empty()) {
            ss << "\n";
            for (const auto& w : warnings) ss << "> warning: " << w << "\n";
        }
        return ss.str();
    }
};

std::vector<std::string> sorted_datasets(const std::vector<harness::RunResult>& results) {
    std::set<std::string> ds;
    for (const auto& r : results) ds.insert(r.spec.dataset);
    return {ds.begin(), ds.end()};
}

// imported reference rows: CSV columns model,method,dataset,value
std::vector<TableRow> imported_rows(const fs::path& csv, const std::vector<std::string>& datasets) {
    std::vector<TableRow> rows;
    if (csv.empty() || !fs::exists(csv)) return rows;
    std::istringstream in(util::read_file(csv));
    std::string line;
    std::map<std::pair<std::string, std::string>, TableRow> grouped;
    bool header = true;
    while (std::getline(in, line)) {
        line = util::trim(line);
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        auto parts = util::split(line, ',');
        if (parts.size() != 4) throw ConfigError("reference csv row must be model,method,dataset,value");
        auto key = std::make_pair(parts[0], parts[1]);
        auto& row = grouped[key];
        row.group = "reference";
        row.head = {parts[0], parts[1], "imported"};
        row.cells[parts[2]] = CellRef{std::stod(parts[3]), "imported", true};
    }
    for (auto& [key, row] : grouped) rows.push_back(std::move(row));
    (void)datasets;
    return rows;
}

void write_table(const harness::Environment& env, const TableDoc& doc, const std::string& name,
                 const std::string& title, EmitNotes& notes) {
    fs::path dir = env.out_root / "reports";
    fs::create_directories(dir);
    fs::path csv = dir / ("table_" + name + ".csv");
    fs::path md = dir / ("table_" + name + ".md");
    util::atomic_write(csv, doc.to_csv());
    util::atomic_write(md, doc.to_markdown(title));
    notes.files.push_back(csv);
    notes.files.push_back(md);
    for (const auto& w : doc.warnings) notes.warnings.push_back(w);
}

}  // namespace

EmitNotes emit_tables(const harness::Environment& env, TableLayout layout) {
    EmitNotes notes;
    auto results = harness::load_results(env);

    if (layout == TableLayout::stability) {
        // rows from persisted stability outcomes
        TableDoc doc;
        doc.head_names = {"dataset", "modality", "min", "max", "mean", "median", "delta",
                          "p_at_1", "p_at_n", "delta_p"};
        fs::path dir = env.out_root / "stability";
        std::ostringstream csv;
        csv << "dataset,modality,min,max,mean,median,delta,p_at_1,p_at_n,delta_p,source\n";
        std::ostringstream md;
        md << "# Prompt stability\n\n| dataset | modality | min | max | mean | median | delta | "
              "P@1 | P@n | dP@K |\n|---|---|---|---|---|---|---|---|---|---|\n";
        int rows = 0;
        if (fs::exists(dir)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(dir))
                if (e.path().extension() == ".json") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                json j = json::parse(util::read_file(f));
                csv << j.at("dataset").get<std::string>() << ','
                    << j.at("modality").get<std::string>() << ','
                    << util::fmt_double(j["spread"]["min"].get<double>()) << ','
                    << util::fmt_double(j["spread"]["max"].get<double>()) << ','
                    << util::fmt_double(j["spread"]["mean"].get<double>()) << ','
                    << util::fmt_double(j["spread"]["median"].get<double>()) << ','
                    << util::fmt_double(j["spread"]["delta"].get<double>()) << ','
                    << util::fmt_double(j["pass_at_1"].get<double>()) << ','
                    << util::fmt_double(j["pass_at_n"].get<double>()) << ','
                    << util::fmt_double(j["delta_pass"].get<double>()) << ','
                    << f.filename().string() << '\n';
                md << "| " << j.at("dataset").get<std::string>() << " | "
                   << j.at("modality").get<std::string>() << " | "
                   << fmt_score(j["spread"]["min"].get<double>()) << " | "
                   << fmt_score(j["spread"]["max"].get<double>()) << " | "
                   << fmt_score(j["spread"]["mean"].get<double>()) << " | "
                   << fmt_score(j["spread"]["median"].get<double>()) << " | "
                   << fmt_score(j["spread"]["delta"].get<double>()) << " | "
                   << fmt_score(j["pass_at_1"].get<double>()) << " | "
                   << fmt_score(j["pass_at_n"].get<double>()) << " | "
                   << fmt_score(j["delta_pass"].get<double>()) << " |\n";
                ++rows;
            }
        }
        if (rows == 0) notes.warnings.push_back("no stability results found");
        fs::path out = env.out_root / "reports";
        fs::create_directories(out);
        util::atomic_write(out / "table_stability.csv", csv.str());
        util::atomic_write(out / "table_stability.md", md.str());
        notes.files.push_back(out / "table_stability.csv");
        notes.files.push_back(out / "table_stability.md");
        return notes;
    }

    if (results.empty()) {
        notes.warnings.push_back("result store is empty for layout " + to_string(layout));
        return notes;
    }
    auto datasets = sorted_datasets(results);

    TableDoc doc;
    doc.dataset_cols = datasets;
    if (layout == TableLayout::main) {
        doc.head_names = {"model", "method", "modality"};
        for (auto& row : imported_rows(env.reference_csv, datasets)) doc.rows.push_back(row);

        // heuristic + random floor block
        std::map<std::string, TableRow> heur;
        for (const auto& r : results) {
            if (r.spec.method != harness::Method::heuristic &&
                r.spec.method != harness::Method::random_probe)
                continue;
            std::string label = r.spec.method_label();
            std::string model = r.spec.method == harness::Method::random_probe
                                    ? "Random(" + r.spec.model + ")"
                                    : "Random";
            auto& row = heur[model + "/" + label];
            row.group = "floors";
            row.head = {model, label,
                        r.spec.method == harness::Method::random_probe
                            ? represent::to_string(r.spec.modality)
                            : "-"};
            row.cells[r.spec.dataset] =
                CellRef{r.metric_values.at("macro_f1"), r.cell_key, true};
        }
        for (auto& [k, row] : heur) doc.rows.push_back(std::move(row));

        // model block: preferred modality per (model, method)
        const std::vector<std::string> preference = {"d+v", "d", "v"};
        std::map<std::pair<std::string, std::string>, std::map<std::string, const harness::RunResult*>>
            by_model_method;  // -> modality -> result (first dataset wins arbitrary; keep per ds)
        std::map<std::tuple<std::string, std::string, std::string, std::string>,
                 const harness::RunResult*>
            exact;
        std::set<std::string> models;
        for (const auto& r : results) {
            if (r.spec.method != harness::Method::prompt && r.spec.method != harness::Method::probe)
                continue;
            if (r.spec.shots_per_class != 0 || r.spec.style != prompting::PromptStyle::direct)
                continue;  // ablation rows live in the ablation layout
            models.insert(r.spec.model);
            exact[{r.spec.model, harness::to_string(r.spec.method),
                   represent::to_string(r.spec.modality), r.spec.dataset}] = &r;
        }
        for (const auto& model : models) {
            for (const std::string method : {"probe", "prompt"}) {
                std::string chosen;
                for (const auto& m : preference) {
                    bool any = false;
                    for (const auto& ds : datasets)
                        if (exact.count({model, method, m, ds})) any = true;
                    if (any) {
                        chosen = m;
                        break;
                    }
                }
                if (chosen.empty()) continue;
                TableRow row;
                row.group = "models";
                row.head = {model, method, chosen};
                for (const auto& ds : datasets) {
                    auto it = exact.find({model, method, chosen, ds});
                    if (it == exact.end()) {
                        doc.warnings.push_back("missing cell: " + model + "/" + method + "/" +
                                               chosen + "/" + ds);
                        continue;
                    }
                    row.cells[ds] = CellRef{it->second->metric_values.at("macro_f1"),
                                            it->second->cell_key, true};
                }
                doc.rows.push_back(std::move(row));
            }
        }
        write_table(env, doc, "main", "Macro F1 by model and method", notes);
        return notes;
    }

    if (layout == TableLayout::modality_split) {
        doc.head_names = {"model", "method", "modality"};
        std::map<std::tuple<std::string, std::string, std::string>, TableRow> rows;
        for (const auto& r : results) {
            bool is_model_cell = r.spec.method == harness::Method::prompt ||
                                 r.spec.method == harness::Method::probe ||
                                 r.spec.method == harness::Method::random_probe;
            if (!is_model_cell) continue;
            if (r.spec.shots_per_class != 0 || r.spec.style != prompting::PromptStyle::direct)
                continue;
            std::string model = r.spec.method == harness::Method::random_probe
                                    ? "Random(" + r.spec.model + ")"
                                    : r.spec.model;
            auto key = std::make_tuple(model, r.spec.method_label(),
                                       represent::to_string(r.spec.modality));
            auto& row = rows[key];
            row.head = {std::get<0>(key), std::get<1>(key), std::get<2>(key)};
            row.cells[r.spec.dataset] =
                CellRef{r.metric_values.at("macro_f1"), r.cell_key, true};
        }
        for (auto& [k, row] : rows) doc.rows.push_back(std::move(row));
        for (auto& row : doc.rows)
            for (const auto& ds : datasets)
                if (!row.cells.count(ds))
                    doc.warnings.push_back("missing cell: " + row.head[0] + "/" + row.head[1] +
                                           "/" + row.head[2] + "/" + ds);
        write_table(env, doc, "modality_split", "Macro F1 split by model, method, and modality",
                    notes);
        return notes;
    }

    // ablation: shots/style columns; each cell averages across modalities
    doc.head_names = {"method", "model", "shots", "style"};
    struct Acc {
        double sum = 0.0;
        int count = 0;
        std::string provenance;
    };
    std::map<std::tuple<std::string, std::string, int, std::string>, std::map<std::string, Acc>>
        acc_rows;
    for (const auto& r : results) {
        if (r.spec.method != harness::Method::prompt && r.spec.method != harness::Method::probe)
            continue;
        auto key = std::make_tuple(harness::to_string(r.spec.method), r.spec.model,
                                   r.spec.shots_per_class, prompting::to_string(r.spec.style));
        Acc& acc = acc_rows[key][r.spec.dataset];
        acc.sum += r.metric_values.at("macro_f1");
        acc.count += 1;
        acc.provenance += (acc.provenance.empty() ? "" : "+") + r.cell_key;
    }
    for (const auto& [key, cells] : acc_rows) {
        TableRow row;
        row.head = {std::get<0>(key), std::get<1>(key),
                    std::to_string(std::get<2>(key)), std::get<3>(key)};
        for (const auto& [ds, acc] : cells)
            row.cells[ds] = CellRef{acc.sum / acc.count, acc.provenance, true};
        doc.rows.push_back(std::move(row));
    }
    write_table(env, doc, "ablation", "Prompting and probing ablations (shots, style)", notes);
    return notes;
}

namespace {

// --- simple chart drawing ----------------------------------------------------

const cv::Scalar kAxis(30, 30, 30);
const std::vector<cv::Scalar>& chart_palette() {
    static const std::vector<cv::Scalar> p = {
        {180, 119, 31},  {14, 127, 255}, {44, 160, 44},   {40, 39, 214},
        {189, 103, 148}, {75, 86, 140},  {194, 119, 227}, {127, 127, 127},
    };
    return p;
}

struct Chart {
    cv::Mat img;
    cv::Rect area;
    double x_min, x_max, y_min, y_max;

    Chart(int w, int h, double x0, double x1, double y0, double y1, const std::string& title,
          const std::string& xlabel, const std::string& ylabel)
        : img(h, w, CV_8UC3, cv::Scalar(255, 255, 255)),
          area(64, 36, w - 80, h - 84), x_min(x0), x_max(x1), y_min(y0), y_max(y1) {
        cv::rectangle(img, area, kAxis, 1, cv::LINE_8);
        cv::putText(img, title, {area.x, 24}, cv::FONT_HERSHEY_SIMPLEX, 0.55, kAxis, 1,
                    cv::LINE_8);
        cv::putText(img, xlabel, {area.x + area.width / 2 - 40, h - 14},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, kAxis, 1, cv::LINE_8);
        cv::putText(img, ylabel, {4, area.y - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kAxis, 1,
                    cv::LINE_8);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", y_max);
        cv::putText(img, buf, {8, area.y + 12}, cv::FONT_HERSHEY_SIMPLEX, 0.38, kAxis, 1,
                    cv::LINE_8);
        std::snprintf(buf, sizeof(buf), "%.2f", y_min);
        cv::putText(img, buf, {8, area.y + area.height - 2}, cv::FONT_HERSHEY_SIMPLEX, 0.38,
                    kAxis, 1, cv::LINE_8);
    }

    cv::Point to_px(double x, double y) const {
        double fx = (x_max > x_min) ? (x - x_min) / (x_max - x_min) : 0.5;
        double fy = (y_max > y_min) ? (y - y_min) / (y_max - y_min) : 0.5;
        return {area.x + static_cast<int>(std::lround(fx * (area.width - 1))),
                area.y + area.height - 1 - static_cast<int>(std::lround(fy * (area.height - 1)))};
    }

    void polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                  const cv::Scalar& color) {
        std::vector<cv::Point> pts;
        for (size_t i = 0; i < xs.size(); ++i) pts.push_back(to_px(xs[i], ys[i]));
        if (pts.size() > 1) cv::polylines(img, pts, false, color, 2, cv::LINE_8);
        for (const auto& p : pts) cv::circle(img, p, 2, color, cv::FILLED, cv::LINE_8);
    }

    void legend(const std::vector<std::string>& names) {
        int lx = area.x + 8, ly = area.y + 10;
        for (size_t i = 0; i < names.size(); ++i) {
            const auto& color = chart_palette()[i % chart_palette().size()];
            cv::line(img, {lx, ly + 4}, {lx + 18, ly + 4}, color, 2, cv::LINE_8);
            cv::putText(img, names[i], {lx + 24, ly + 8}, cv::FONT_HERSHEY_SIMPLEX, 0.38, kAxis,
                        1, cv::LINE_8);
            ly += 14;
        }
    }

    void save(const fs::path& path) const {
        std::vector<uint8_t> buf;
        cv::imencode(".png", img, buf);
        util::atomic_write(path, buf.data(), buf.size());
    }
};

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

}  // namespace

std::string metrics_csv(const harness::Environment& env) {
    std::ostringstream ss;
    ss << metrics::metric_csv_header() << '\n';
    for (const auto& r : harness::load_results(env)) {
        for (const auto& [name, value] : r.metric_values) {
            metrics::MetricRow row;
            row.dataset = r.spec.dataset;
            row.model = r.spec.model;
            row.method = r.spec.method_label();
            row.modality = represent::to_string(r.spec.modality);
            row.style = prompting::to_string(r.spec.style);
            row.shots = r.spec.shots_per_class;
            row.seed = static_cast<int64_t>(r.spec.seed);
            row.metric = name;
            row.value = value;
            ss << metrics::metric_csv_line(row) << '\n';
        }
    }
    return ss.str();
}

EmitNotes emit_figures(const harness::Environment& env) {
    EmitNotes notes;
    auto results = harness::load_results(env);
    fs::path dir = env.out_root / "figures";
    fs::create_directories(dir);

    // 1) layer curves
    {
        std::ostringstream csv;
        csv << "cell_key,model,method,dataset,modality,layer,macro_f1\n";
        std::map<std::pair<std::string, std::string>, std::vector<const harness::RunResult*>>
            by_panel;
        for (const auto& r : results) {
            if (!r.curve) continue;
            for (size_t layer = 0; layer < r.curve->per_layer_f1.size(); ++layer)
                csv << r.cell_key << ',' << r.spec.model << ',' << r.spec.method_label() << ','
                    << r.spec.dataset << ',' << represent::to_string(r.spec.modality) << ','
                    << layer << ',' << util::fmt_double(r.curve->per_layer_f1[layer]) << '\n';
            by_panel[{r.spec.dataset, represent::to_string(r.spec.modality)}].push_back(&r);
        }
        fs::path curves_csv = dir / "layer_curves.csv";
        util::atomic_write(curves_csv, csv.str());
        notes.files.push_back(curves_csv);

        if (by_panel.empty()) notes.warnings.push_back("no probe curves present; layer plots skipped");
        for (const auto& [panel, runs] : by_panel) {
            const auto& [ds, modality] = panel;
            size_t layers = runs.front()->curve->per_layer_f1.size();
            Chart chart(640, 480, 0, static_cast<double>(layers - 1), 0.0, 1.0,
                        "Layer-wise probe macro F1: " + ds + " (" + modality + ")", "layer",
                        "macro F1");
            std::vector<std::string> names;
            for (size_t i = 0; i < runs.size(); ++i) {
                std::vector<double> xs, ys;
                for (size_t l = 0; l < runs[i]->curve->per_layer_f1.size(); ++l) {
                    xs.push_back(static_cast<double>(l));
                    ys.push_back(runs[i]->curve->per_layer_f1[l]);
                }
                chart.polyline(xs, ys, chart_palette()[i % chart_palette().size()]);
                names.push_back(runs[i]->spec.model + "/" + runs[i]->spec.method_label());
            }
            chart.legend(names);
            fs::path png = dir / ("layer_curve_" + sanitize(ds) + "_" + sanitize(modality) + ".png");
            chart.save(png);
            notes.files.push_back(png);
        }
    }

    // 2) modality box-whisker over per-variant F1 lists
    {
        fs::path stab_dir = env.out_root / "stability";
        std::map<std::string, std::vector<double>> by_modality;
        std::ostringstream csv;
        csv << "dataset,modality,variant,macro_f1\n";
        if (fs::exists(stab_dir)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(stab_dir))
                if (e.path().extension() == ".json") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                json j = json::parse(util::read_file(f));
                auto f1s = j.at("per_variant_f1").get<std::vector<double>>();
                std::string modality = j.at("modality").get<std::string>();
                for (size_t i = 0; i < f1s.size(); ++i) {
                    by_modality[modality].push_back(f1s[i]);
                    csv << j.at("dataset").get<std::string>() << ',' << modality << ',' << (i + 1)
                        << ',' << util::fmt_double(f1s[i]) << '\n';
                }
            }
        }
        if (by_modality.empty()) {
            notes.warnings.push_back("no stability results; box-whisker skipped");
        } else {
            fs::path points_csv = dir / "modality_spread.csv";
            util::atomic_write(points_csv, csv.str());
            notes.files.push_back(points_csv);

            Chart chart(640, 480, 0.0, static_cast<double>(by_modality.size()), 0.0, 1.0,
                        "Prompt macro F1 by modality (variant runs)", "modality", "macro F1");
            int slot = 0;
            for (auto& [modality, values] : by_modality) {
                std::sort(values.begin(), values.end());
                auto q = [&](double f) {
                    double idx = f * (static_cast<double>(values.size()) - 1.0);
                    size_t lo = static_cast<size_t>(idx);
                    size_t hi = std::min(lo + 1, values.size() - 1);
                    double t = idx - static_cast<double>(lo);
                    return values[lo] * (1.0 - t) + values[hi] * t;
                };
                double x = slot + 0.5;
                cv::Point pmin = chart.to_px(x, values.front());
                cv::Point pq1 = chart.to_px(x, q(0.25));
                cv::Point pmed = chart.to_px(x, q(0.5));
                cv::Point pq3 = chart.to_px(x, q(0.75));
                cv::Point pmax = chart.to_px(x, values.back());
                const auto& color = chart_palette()[static_cast<size_t>(slot) %
                                                    chart_palette().size()];
                int half = 28;
                cv::line(chart.img, pmin, pq1, color, 1, cv::LINE_8);
                cv::line(chart.img, pq3, pmax, color, 1, cv::LINE_8);
                cv::rectangle(chart.img, {pq1.x - half, pq3.y}, {pq1.x + half, pq1.y}, color, 1,
                              cv::LINE_8);
                cv::line(chart.img, {pmed.x - half, pmed.y}, {pmed.x + half, pmed.y}, color, 2,
                         cv::LINE_8);
                cv::putText(chart.img, modality, {pmed.x - 10, chart.area.y + chart.area.height + 16},
                            cv::FONT_HERSHEY_SIMPLEX, 0.45, kAxis, 1, cv::LINE_8);
                ++slot;
            }
            fs::path png = dir / "modality_boxwhisker.png";
            chart.save(png);
            notes.files.push_back(png);
        }
    }

    // 3) 2D embedding projections of best-layer activations
    {
        int emitted = 0;
        for (const auto& r : results) {
            if (!r.curve || r.spec.method != harness::Method::probe) continue;
            auto tmpl_style = r.spec.style;
            auto key = model_bridge::make_store_key(
                r.spec.model, r.spec.dataset, dataset::Split::test, r.spec.modality, tmpl_style,
                r.spec.shots_per_class,
                tmpl_style == prompting::PromptStyle::cot
                    ? model_bridge::ExtractionStyle::post_cot_last_token
                    : model_bridge::ExtractionStyle::prefill_last_token,
                env.serial_config);
            model_bridge::ActivationStore store(model_bridge::ActivationStore::open(
                env.acts_root(), key));
            auto ids = store.ids();
            if (ids.size() > 500) ids.resize(500);
            if (ids.size() < 4) continue;
            Eigen::MatrixXd features = probes::layer_features(store, r.curve->best_layer, ids);
            tsne::TsneConfig cfg;
            cfg.seed = r.spec.seed;
            cfg.iterations = 300;
            Eigen::MatrixXd emb = tsne::embed_2d(features, cfg);

            std::ostringstream csv;
            csv << "x,y,label\n";
            std::vector<int> labels;
            for (size_t i = 0; i < ids.size(); ++i) {
                int label = r.probe_true_labels.count(ids[i]) ? r.probe_true_labels.at(ids[i]) : 0;
                labels.push_back(label);
                csv << util::fmt_double(emb(static_cast<Eigen::Index>(i), 0)) << ','
                    << util::fmt_double(emb(static_cast<Eigen::Index>(i), 1)) << ',' << label
                    << '\n';
            }
            std::string base = "embedding_" + r.cell_key;
            util::atomic_write(dir / (base + ".csv"), csv.str());
            json meta = {{"algorithm", "tsne"},
                         {"seed", r.spec.seed},
                         {"layer", r.curve->best_layer},
                         {"cell_key", r.cell_key}};
            util::atomic_write(dir / (base + ".meta.json"), meta.dump(2) + "\n");
            notes.files.push_back(dir / (base + ".csv"));

            double x0 = emb.col(0).minCoeff(), x1 = emb.col(0).maxCoeff();
            double y0 = emb.col(1).minCoeff(), y1 = emb.col(1).maxCoeff();
            Chart chart(640, 480, x0, x1, y0, y1,
                        "2D embedding: " + r.spec.model + " " + r.spec.dataset + " (" +
                            represent::to_string(r.spec.modality) + ")",
                        "dim 1", "dim 2");
            for (size_t i = 0; i < ids.size(); ++i) {
                const auto& color =
                    chart_palette()[static_cast<size_t>(std::max(0, labels[i] - 1)) %
                                    chart_palette().size()];
                cv::circle(chart.img,
                           chart.to_px(emb(static_cast<Eigen::Index>(i), 0),
                                       emb(static_cast<Eigen::Index>(i), 1)),
                           3, color, cv::FILLED, cv::LINE_8);
            }
            fs::path png = dir / (base + ".png");
            chart.save(png);
            notes.files.push_back(png);
            ++emitted;
        }
        if (emitted == 0)
            notes.warnings.push_back("no probe activation stores found; embedding plots skipped");
    }
    return notes;
}

}  // namespace tsprobe::report
