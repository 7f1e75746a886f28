#pragma once

#include <string>
#include <vector>

#include "sdil/metrics.hpp"

namespace sdil::harness {

struct SkillMapCell {
    int row = 0;
    int col = 0;
    int action = 0;          // majority action among visits
    double consistency = 0.0; // agreement fraction of the majority action
    int visits = 0;
};

struct SkillMap {
    int skill = 0;
    std::vector<SkillMapCell> cells; // only self-selected cells are kept
};

// Rolls the low-level policy out with the skill variable pinned to z^k and
// records the per-cell majority action and its agreement fraction. Cells
// where the bi module does not select skill k itself are omitted.
SkillMap export_skill_map(const PolicyStack& model, const grid::Env& env, int skill,
                          int n_rollouts, std::uint64_t seed);

// Skills ordered by descending s^op (as filled in by discovery).
std::vector<int> skill_ranking(const PolicyStack& model);

void write_skill_map(const SkillMap& map, const std::string& path);
void write_skill_ranking(const PolicyStack& model, const std::string& path);

// One TSV line per transition: traj id, set label, step, action, selected
// skill (bi argmax) and the encoder embedding as comma-joined literals.
void export_embeddings(const PolicyStack& model, const grid::Corpus& corpus,
                       const std::string& path);

struct EmbeddingRow {
    int traj_id = 0;
    bool clean = true;
    int step = 0;
    int action = 0;
    int skill = 0;
    std::vector<float> embedding;
};

std::vector<EmbeddingRow> read_embeddings(const std::string& path);

// Per-set selection distributions as a two-line TSV.
void write_selection_distributions(const PolicyStack& model, const grid::Corpus& corpus,
                                   const std::string& path);

} // namespace sdil::harness
