#ifndef GSINA_DATASET_IO_HPP
#define GSINA_DATASET_IO_HPP

#include "gsina/graph.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>

namespace gsina {

// One JSON object per line:
//   {"num_nodes": n, "edges": [[u,v],...], "features": [[...],...], "label": y,
//    "gt_edge_mask": [0/1,...], "gt_node_mask": [...], "node_labels": [...], "env": "..."}
// The last four keys are optional.

nlohmann::json example_to_json(const LabeledExample& example);
LabeledExample example_from_json(const nlohmann::json& j);

void write_jsonl(std::ostream& out, const Dataset& dataset);
void write_jsonl(const std::filesystem::path& path, const Dataset& dataset);

/// Throws Parse (with the 1-based line number) on malformed input and Io when
/// the file cannot be opened.
Dataset read_jsonl(std::istream& in);
Dataset read_jsonl(const std::filesystem::path& path);

}  // namespace gsina

#endif  // GSINA_DATASET_IO_HPP
