#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsprobe/harness.hpp"

namespace tsprobe::report {

enum class TableLayout { main, modality_split, ablation, stability };

std::string to_string(TableLayout l);
TableLayout layout_from_string(const std::string& s);

struct EmitNotes {
    std::vector<std::string> warnings;  // completeness / skipped families
    std::vector<std::filesystem::path> files;
};

/// Renders one table layout to CSV (+provenance columns) and Markdown under
/// out_root/reports/. Dataset columns plus an Avg column; absent cells are
/// blank and flagged.
EmitNotes emit_tables(const harness::Environment& env, TableLayout layout);

/// Emits the figure family: layer-curve CSV+PNGs, the modality box-whisker
/// plot over per-variant F1 lists, and 2D embedding projections (t-SNE,
/// seed recorded) of best-layer activations. Every figure has a CSV of its
/// plotted points next to it.
EmitNotes emit_figures(const harness::Environment& env);

/// Long-form metric rows for the whole result store (the canonical CSV).
std::string metrics_csv(const harness::Environment& env);

}  // namespace tsprobe::report
