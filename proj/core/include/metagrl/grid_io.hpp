#pragma once

#include "metagrl/grid.hpp"
#include "metagrl/text_document.hpp"

#include <string>

namespace metagrl {

// Grid spec files use the sectioned key=value format of text_document.hpp with
// sections [meta], [buses], [lines], [thermal], [renewable], [storage]. Keys
// mirror the struct fields one-to-one; unknown sections or keys are rejected.
GridSpec grid_spec_from_document(const TextDocument& doc);
GridSpec parse_grid_spec(const std::string& text);
GridSpec load_grid_spec(const std::string& path);

std::string format_grid_spec(const GridSpec& spec);
void save_grid_spec(const GridSpec& spec, const std::string& path);

}  // namespace metagrl
