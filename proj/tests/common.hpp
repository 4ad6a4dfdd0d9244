#pragma once

#include <string>

#include "seqadj/mgraph.hpp"
#include "seqadj/io.hpp"

namespace testing_support {

inline std::string data_path(const std::string& rel) { return std::string(SEQADJ_DATA_DIR) + "/" + rel; }

inline seqadj::MGraph fixture_graph(const std::string& name) {
  return seqadj::parse_graph(seqadj::read_file(data_path("graphs/" + name + ".graph")));
}

}  // namespace testing_support
