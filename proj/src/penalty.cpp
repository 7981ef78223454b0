#include "fedida/penalty.hpp"

namespace fedida {

std::string to_string(PenaltyMode mode) {
  switch (mode) {
    case PenaltyMode::signed_ordered: return "signed-ordered";
    case PenaltyMode::absolute_pair: return "absolute-pair";
    case PenaltyMode::squared_group_mean: return "squared-group-mean";
  }
  return "?";
}

PenaltyMode parse_penalty_mode(const std::string& name) {
  if (name == "signed-ordered") return PenaltyMode::signed_ordered;
  if (name == "absolute-pair") return PenaltyMode::absolute_pair;
  if (name == "squared-group-mean") return PenaltyMode::squared_group_mean;
  throw ConfigError("unknown penalty mode '" + name + "'");
}

GroupAssignment assign_groups(const SubgroupIndex& index, Eigen::Index rows) {
  if (index.by_outcome) throw Error("penalty: subgroup index must group by sensitive attributes only");
  GroupAssignment ga;
  ga.group_of.assign(static_cast<std::size_t>(rows), -1);
  for (const auto& [key, members] : index.groups) {
    for (auto r : members) {
      if (r < 0 || r >= rows) throw Error("penalty: subgroup index refers to a missing row");
      ga.group_of[static_cast<std::size_t>(r)] = ga.groups;
    }
    ++ga.groups;
  }
  for (int g : ga.group_of)
    if (g < 0) throw Error("penalty: subgroup index does not cover every row");
  return ga;
}

}  // namespace fedida
