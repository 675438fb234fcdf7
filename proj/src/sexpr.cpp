#include "labplan/sexpr.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace labplan {

SourceText SourceText::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError(path, {0, 0}, "cannot open file");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return SourceText{buf.str(), path};
}

ParseError::ParseError(std::string origin, Location loc, std::string message)
    : std::runtime_error(origin + ":" + std::to_string(loc.line) + ":" +
                         std::to_string(loc.col) + ": " + message),
      origin_(std::move(origin)),
      loc_(loc),
      message_(std::move(message)) {}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string SExpr::to_string() const {
  if (!is_list) return atom;
  std::string out = "(";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ' ';
    out += items[i].to_string();
  }
  return out + ")";
}

namespace {

bool is_symbol_char(char c) {
  if (std::isalnum(static_cast<unsigned char>(c))) return true;
  switch (c) {
    case '_': case '-': case '?': case ':': case '#': case '=': case '.':
    case '<': case '>': case '+': case '*': case '/': case '!': case '[':
    case ']': case ',': case '"': case '\'': case '@': case '$': case '%':
    case '&': case '^': case '~': case '|':
      return true;
    default:
      return false;
  }
}

// Returns the byte length of a valid UTF-8 sequence starting at s[i], or 0.
std::size_t utf8_length(std::string_view s, std::size_t i) {
  const auto c = static_cast<unsigned char>(s[i]);
  std::size_t len = 0;
  if (c < 0x80) return 1;
  if ((c & 0xE0) == 0xC0) len = 2;
  else if ((c & 0xF0) == 0xE0) len = 3;
  else if ((c & 0xF8) == 0xF0) len = 4;
  else return 0;
  if (i + len > s.size()) return 0;
  for (std::size_t k = 1; k < len; ++k) {
    if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return 0;
  }
  return len;
}

class Reader {
 public:
  explicit Reader(const SourceText& src) : src_(src), text_(src.content) {}

  std::vector<SExpr> read_all() {
    std::vector<SExpr> forms;
    // Stack of open lists; parentheses are matched iteratively.
    std::vector<SExpr> stack;
    while (true) {
      skip_space();
      if (pos_ >= text_.size()) break;
      const char c = text_[pos_];
      const Location here{line_, col_};
      if (c == '(') {
        SExpr list;
        list.is_list = true;
        list.loc = here;
        stack.push_back(std::move(list));
        advance(1);
      } else if (c == ')') {
        if (stack.empty()) {
          throw ParseError(src_.origin, here,
                           "unbalanced parentheses at line " + std::to_string(here.line) +
                               ": unexpected ')'");
        }
        SExpr done = std::move(stack.back());
        stack.pop_back();
        advance(1);
        push(stack, forms, std::move(done));
      } else if (is_symbol_char(c)) {
        std::size_t end = pos_;
        while (end < text_.size() && is_symbol_char(text_[end])) ++end;
        SExpr atom;
        atom.atom = to_lower(text_.substr(pos_, end - pos_));
        atom.loc = here;
        advance(end - pos_);
        push(stack, forms, std::move(atom));
      } else {
        const std::size_t len = utf8_length(text_, pos_);
        if (len == 0) {
          throw ParseError(src_.origin, here, "lexical error: invalid UTF-8 byte");
        }
        throw ParseError(src_.origin, here,
                         "lexical error: unexpected character '" +
                             std::string(text_.substr(pos_, len)) + "'");
      }
    }
    if (!stack.empty()) {
      const Location open = stack.front().loc;
      throw ParseError(src_.origin, open,
                       "unbalanced parentheses at line " + std::to_string(open.line) +
                           ": '(' is never closed");
    }
    return forms;
  }

 private:
  static void push(std::vector<SExpr>& stack, std::vector<SExpr>& forms, SExpr e) {
    if (stack.empty()) {
      forms.push_back(std::move(e));
    } else {
      stack.back().items.push_back(std::move(e));
    }
  }

  void advance(std::size_t n) {
    for (std::size_t k = 0; k < n && pos_ < text_.size(); ++k) {
      if (text_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else if ((static_cast<unsigned char>(text_[pos_]) & 0xC0) != 0x80) {
        ++col_;
      }
      ++pos_;
    }
  }

  void skip_space() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == ';') {
        // Comments may hold arbitrary UTF-8; validate but do not interpret.
        while (pos_ < text_.size() && text_[pos_] != '\n') {
          const std::size_t len = utf8_length(text_, pos_);
          if (len == 0) {
            throw ParseError(src_.origin, {line_, col_}, "lexical error: invalid UTF-8 byte");
          }
          advance(len);
        }
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance(1);
      } else {
        break;
      }
    }
  }

  const SourceText& src_;
  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace

std::vector<SExpr> read_sexprs(const SourceText& src) { return Reader(src).read_all(); }

}  // namespace labplan
