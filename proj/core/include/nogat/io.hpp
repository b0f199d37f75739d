#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "nogat/graph.hpp"

namespace nogat {

/// Counters collected while reading raw dataset files.
struct LoadDiagnostics {
  std::size_t edge_rows = 0;         // edge lines read
  std::size_t unknown_endpoint = 0;  // dropped: id absent from the node file
  std::size_t self_loops = 0;        // dropped: source == target
  std::size_t duplicates = 0;        // directed pairs seen more than once
};

/// Reads a Planetoid `.content` / `.cites` pair.
///
/// Content rows are `<id> <f_0> ... <f_{F-1}> <label>`, cites rows are
/// `<target> <source>`; tabs or spaces separate fields. Ids and labels are
/// arbitrary tokens, remapped to dense indices in first-appearance order.
/// Edges are symmetrized; self-loops and edges to unknown ids are dropped.
/// Masks are left empty. Throws DataError with the line number on bad input.
Graph load_planetoid(const std::filesystem::path& content_path,
                     const std::filesystem::path& cites_path,
                     LoadDiagnostics* diagnostics = nullptr);

/// WebKB graphs. Accepts the Planetoid schema, and also the Geom-GCN
/// release layout (`node_id<TAB>comma,separated,features<TAB>label` with a
/// header line, edges as `<src><TAB><dst>` with a header line), detected
/// by the header.
Graph load_webkb(const std::filesystem::path& node_path, const std::filesystem::path& edge_path,
                 LoadDiagnostics* diagnostics = nullptr);

/// Writes the versioned little-endian graph cache (magic "NOGATGRF", v1).
void save_graph(const Graph& graph, const std::filesystem::path& path);

/// Reads a cache written by save_graph; the result compares equal bit-for-bit.
Graph load_graph(const std::filesystem::path& path);

/// Finds `name` under `data_dir` and loads it, trying in order:
///   <dir>/<name>.nogat                       (cache written by save_graph)
///   <dir>/<name>/<name>.content + .cites     (Planetoid schema)
///   <dir>/<name>/out1_node_feature_label.txt + out1_graph_edges.txt
/// The graph name is set to `name`. Throws DataError listing the paths tried.
Graph load_dataset(const std::filesystem::path& data_dir, const std::string& name,
                   LoadDiagnostics* diagnostics = nullptr);

}  // namespace nogat
