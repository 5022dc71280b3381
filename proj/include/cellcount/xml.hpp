#pragma once

// Small non-validating XML reader, enough for CellCounter marker files:
// elements, attributes, character data, CDATA, comments, processing
// instructions, DOCTYPE (skipped) and the predefined/numeric entities.

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cellcount::xml {

struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::string text;  // concatenated character data directly inside this element
  std::vector<Element> children;
  std::size_t offset = 0;  // byte offset of the start tag

  const Element* child(std::string_view child_name) const;
  std::vector<const Element*> children_named(std::string_view child_name) const;
};

// Throws ParseError carrying the byte offset of the first problem.
Element parse(std::string_view document);

}  // namespace cellcount::xml
