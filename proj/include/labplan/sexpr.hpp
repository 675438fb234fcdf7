#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace labplan {

/// Raw input text plus where it came from ("<inline>" for literals).
struct SourceText {
  std::string content;
  std::string origin = "<inline>";

  static SourceText from_file(const std::string& path);
};

struct Location {
  int line = 0;
  int col = 0;
};

/// Error raised by every parser in the project. what() is formatted as
/// "origin:line:col: message".
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string origin, Location loc, std::string message);

  const std::string& origin() const { return origin_; }
  Location location() const { return loc_; }
  const std::string& message() const { return message_; }

 private:
  std::string origin_;
  Location loc_;
  std::string message_;
};

/// One node of an s-expression tree. Atoms are lowercased on read.
struct SExpr {
  bool is_list = false;
  std::string atom;
  std::vector<SExpr> items;
  Location loc;

  bool is_atom() const { return !is_list; }
  bool is_atom(std::string_view text) const { return !is_list && atom == text; }
  bool is_keyword() const { return !is_list && !atom.empty() && atom[0] == ':'; }
  /// True when this is a list whose first element is the atom `head`.
  bool has_head(std::string_view head) const {
    return is_list && !items.empty() && items[0].is_atom(head);
  }
  std::string to_string() const;
};

/// Tokenizes and reads all top-level forms of `src`. Comments start with ';'.
std::vector<SExpr> read_sexprs(const SourceText& src);

std::string to_lower(std::string_view s);

}  // namespace labplan
