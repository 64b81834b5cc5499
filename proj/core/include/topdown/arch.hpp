#pragma once

#include <optional>
#include <string>
#include <vector>

#include "topdown/common.hpp"

namespace topdown {

enum class NetKind { bottom_up, top_down };

// Channel-width rule for a mirrored network: MIRROR reverses the baseline's
// stage widths, UNIFORM sets every stage to one width, REVERSED keeps the
// baseline's widths (widening with depth).
enum class Arrangement { mirror, uniform, reversed };

std::string arrangement_name(Arrangement a);
Arrangement arrangement_from_name(const std::string& name);

struct LayerSpec {
    enum class Kind { conv, res } kind = Kind::conv;
    int k = 3;        // kernel extent
    int s = 1;        // stride
    int f = 1;        // filters (output channels)
    bool bn = false;  // batch norm before the activation
    bool relu = false;
};

struct StageSpec {
    std::vector<LayerSpec> layers;
};

// Marker between consecutive stages: a 2x2 mean pool for bottom-up specs or
// a merge point (consuming the pyramid input at the new resolution) for
// top-down specs. merge_f is the merge block's output width.
struct Transition {
    enum class Kind { pool2, merge } kind = Kind::pool2;
    int merge_f = 0;
};

// Declarative chain-with-stages network description; the classifier head
// (global average pool + 1x1 convolution to `classes` logits) is implicit.
struct ArchSpec {
    std::string name;
    NetKind kind = NetKind::bottom_up;
    int in_c = 1, in_h = 28, in_w = 28;
    int classes = 10;
    std::vector<StageSpec> stages;
    std::vector<Transition> transitions;  // size = stages.size() - 1
};

// Throws invalid_argument when structural invariants are violated
// (positive k/s/f, transition count, resolution underflow, transition kinds
// inconsistent with `kind`).
void validate(const ArchSpec& spec);

// Spatial extent (h, w) at entry of each stage, computed from the input
// extent, strides, and transition markers.
std::vector<std::pair<int, int>> stage_resolutions(const ArchSpec& spec);

// Count of distinct resolutions = pyramid arity of the mirrored network.
int resolution_count(const ArchSpec& spec);

struct MirrorResult {
    ArchSpec spec;
    std::vector<std::string> warnings;
};

// Builds the top-down form of a bottom-up chain: the layer sequence is
// reversed in full (stage order and intra-stage order), pool markers become
// merge points that consume the pyramid input at the new resolution, and
// widths are assigned by the arrangement. The merge output width is the
// filter count of the first convolution of the consuming stage. Only
// pool-marker chains of plain convolutions are mirrorable; residual-block
// specs are rejected.
MirrorResult mirror(const ArchSpec& spec, Arrangement arrangement);

// UNIFORM width: round(mean of the baseline's conv filter counts).
int uniform_width(const ArchSpec& spec);

// Closed-form trainable parameter count (convs k^2*Cin*Cout + Cout, batch
// norms 2C, merge blocks per merge_param_count, residual projections, and
// the implicit head).
int64_t param_count(const ArchSpec& spec);

// Plain-text architecture description, one layer per line; parse/print
// round-trip losslessly. Grammar documented in the repository README.
std::string print_arch(const ArchSpec& spec);
ArchSpec parse_arch(const std::string& text);

// Built-in baseline specs: "lenetfc", "nin_light", "nin", "resnet32".
ArchSpec builtin_spec(const std::string& name);
std::vector<std::string> builtin_names();

}  // namespace topdown
