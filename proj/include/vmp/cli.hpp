#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vmp/engine.hpp"
#include "vmp/graph.hpp"

namespace vmp::cli {

/// A literal array from a model spec: a number has shape (), nested arrays
/// give the shape, values are row-major.
struct Literal {
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

using ParentRef = std::variant<std::string, Literal>;

enum class SpecKind { Stochastic, Constant, Mixture, SumProduct };

struct NodeSpec {
  std::string name;
  SpecKind kind = SpecKind::Stochastic;
  std::optional<FamilyKind> family;       // stochastic and mixture nodes
  std::optional<Eigen::Index> dim;        // inferred from the parents when absent
  std::vector<ParentRef> parents;         // mixture: gate first
  std::optional<Plates> plates;
  std::optional<MomentType> constant_type;
  Literal constant;
  bool random_init = false;
};

struct ObserveSpec {
  std::string node;
  std::string data;  // CSV path, relative to the model spec file
  std::optional<std::string> missing_token;
};

enum class Mode { Vb, Annealed, Svi };

struct EngineSpec {
  Mode mode = Mode::Vb;
  std::size_t max_sweeps = 200;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  std::vector<std::string> order;
  std::vector<double> beta;            // annealed
  std::size_t batch_size = 0;          // svi
  std::size_t axis_from_end = 1;       // svi
  double delay = 1.0;                  // svi
  double forgetting = 0.7;             // svi
  std::vector<std::string> globals;    // svi
};

struct ModelSpec {
  std::vector<NodeSpec> nodes;
  std::vector<ObserveSpec> observe;
  EngineSpec engine;
  std::filesystem::path base_dir;  // resolves relative data paths
};

/// Parses and checks a JSON model spec. Throws ParseError for malformed JSON,
/// ValidationError naming the offending path otherwise, and
/// ConfigurationError for contradictory engine settings.
ModelSpec parse_model_spec(std::string_view text);
/// Reads and parses a spec file; IoError when it cannot be read.
ModelSpec load_model_spec(const std::filesystem::path& path);

/// A rectangular CSV file as a (rows, cols) tensor with a mask that is false
/// at missing cells.
struct CsvData {
  DataTensor tensor;
  Mask mask;
};

/// Throws IoError, RaggedRowError or NonNumericError (1-based row/column).
CsvData load_data_csv(const std::filesystem::path& path, std::string_view missing_token = "NA");

struct Model {
  Graph graph;
  std::map<std::string, NodeId> ids;
  std::vector<NodeId> order;  // empty = latent construction order
  std::vector<NodeId> random_init;
};

/// Builds the graph without data. Construction failures become
/// ValidationError naming the node.
Model build_model(const ModelSpec& spec, bool broadcasting = true);

/// Observes a CSV table on a node. Cells are read row by row into the node's
/// plates ++ event shape; an element is missing when any of its cells is.
void bind_data(Model& model, const std::string& node, const CsvData& data);

/// Per latent stochastic node: family, plates, natural and moment blocks with
/// shape plates ++ block shape; plus the fit report.
nlohmann::json posterior_dump(const Model& model, const FitReport& report);
/// Restores the natural parameters recorded in a dump.
void apply_dump(Model& model, const nlohmann::json& dump);

/// Runs the fit described by the model spec's engine section.
FitReport fit_model(Model& model, const EngineSpec& engine);

/// Entry point of the `vmp` tool; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vmp::cli
