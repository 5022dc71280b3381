#include "cellcount/xml.hpp"

#include <cctype>

#include "cellcount/errors.hpp"

namespace cellcount::xml {

const Element* Element::child(std::string_view child_name) const {
  for (const auto& c : children) {
    if (c.name == child_name) return &c;
  }
  return nullptr;
}

std::vector<const Element*> Element::children_named(std::string_view child_name) const {
  std::vector<const Element*> out;
  for (const auto& c : children) {
    if (c.name == child_name) out.push_back(&c);
  }
  return out;
}

namespace {

class Reader {
 public:
  explicit Reader(std::string_view doc) : doc_(doc) {}

  Element document() {
    skip_misc();
    if (eof() || peek() != '<') fail("expected root element");
    Element root = element();
    skip_misc();
    if (!eof()) fail("unexpected content after root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("xml: " + what + " at byte " + std::to_string(pos_), pos_);
  }

  bool eof() const { return pos_ >= doc_.size(); }
  char peek() const { return doc_[pos_]; }
  bool starts_with(std::string_view s) const { return doc_.substr(pos_, s.size()) == s; }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }

  void skip_past(std::string_view terminator, const char* what) {
    const auto end = doc_.find(terminator, pos_);
    if (end == std::string_view::npos) fail(std::string("unterminated ") + what);
    pos_ = end + terminator.size();
  }

  // Whitespace, comments, processing instructions and DOCTYPE outside elements.
  void skip_misc() {
    while (true) {
      skip_ws();
      if (starts_with("<?")) {
        skip_past("?>", "processing instruction");
      } else if (starts_with("<!--")) {
        skip_past("-->", "comment");
      } else if (starts_with("<!DOCTYPE")) {
        skip_doctype();
      } else {
        return;
      }
    }
  }

  void skip_doctype() {
    int depth = 0;
    while (!eof()) {
      const char c = doc_[pos_++];
      if (c == '[') ++depth;
      if (c == ']') --depth;
      if (c == '>' && depth <= 0) return;
    }
    fail("unterminated DOCTYPE");
  }

  static bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' ||
           c == ':';
  }

  std::string name() {
    const auto start = pos_;
    if (eof() || !(std::isalpha(static_cast<unsigned char>(peek())) || peek() == '_' ||
                   peek() == ':')) {
      fail("expected a name");
    }
    while (!eof() && name_char(peek())) ++pos_;
    return std::string(doc_.substr(start, pos_ - start));
  }

  void append_utf8(std::string& out, unsigned long cp) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }

  // At '&'.
  void entity(std::string& out) {
    const auto semi = doc_.find(';', pos_);
    if (semi == std::string_view::npos || semi - pos_ > 12) fail("malformed entity reference");
    const auto ref = doc_.substr(pos_ + 1, semi - pos_ - 1);
    if (ref == "lt") out += '<';
    else if (ref == "gt") out += '>';
    else if (ref == "amp") out += '&';
    else if (ref == "quot") out += '"';
    else if (ref == "apos") out += '\'';
    else if (ref.size() > 1 && ref[0] == '#') {
      const bool hex = ref[1] == 'x' || ref[1] == 'X';
      const std::string digits(ref.substr(hex ? 2 : 1));
      if (digits.empty()) fail("empty character reference");
      std::size_t used = 0;
      unsigned long cp = 0;
      try {
        cp = std::stoul(digits, &used, hex ? 16 : 10);
      } catch (const std::exception&) {
        fail("bad character reference");
      }
      if (used != digits.size() || cp > 0x10FFFF) fail("bad character reference");
      append_utf8(out, cp);
    } else {
      fail("unknown entity '&" + std::string(ref) + ";'");
    }
    pos_ = semi + 1;
  }

  std::string attribute_value() {
    if (eof() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
    const char quote = doc_[pos_++];
    std::string out;
    while (true) {
      if (eof()) fail("unterminated attribute value");
      const char c = peek();
      if (c == quote) {
        ++pos_;
        return out;
      }
      if (c == '<') fail("'<' in attribute value");
      if (c == '&') {
        entity(out);
      } else {
        out += c;
        ++pos_;
      }
    }
  }

  Element element() {
    Element e;
    e.offset = pos_;
    ++pos_;  // '<'
    e.name = name();
    while (true) {
      skip_ws();
      if (eof()) fail("unterminated start tag <" + e.name + ">");
      if (starts_with("/>")) {
        pos_ += 2;
        return e;
      }
      if (peek() == '>') {
        ++pos_;
        break;
      }
      auto key = name();
      skip_ws();
      if (eof() || peek() != '=') fail("expected '=' after attribute " + key);
      ++pos_;
      skip_ws();
      e.attributes.emplace_back(std::move(key), attribute_value());
    }
    content(e);
    return e;
  }

  void content(Element& e) {
    while (true) {
      if (eof()) fail("missing end tag </" + e.name + ">");
      if (starts_with("</")) {
        pos_ += 2;
        const auto close_at = pos_;
        const auto closing = name();
        if (closing != e.name) {
          pos_ = close_at;
          fail("end tag </" + closing + "> does not match <" + e.name + ">");
        }
        skip_ws();
        if (eof() || peek() != '>') fail("expected '>' in end tag");
        ++pos_;
        return;
      }
      if (starts_with("<!--")) {
        skip_past("-->", "comment");
      } else if (starts_with("<![CDATA[")) {
        pos_ += 9;
        const auto end = doc_.find("]]>", pos_);
        if (end == std::string_view::npos) fail("unterminated CDATA section");
        e.text.append(doc_.substr(pos_, end - pos_));
        pos_ = end + 3;
      } else if (starts_with("<?")) {
        skip_past("?>", "processing instruction");
      } else if (peek() == '<') {
        e.children.push_back(element());
      } else if (peek() == '&') {
        entity(e.text);
      } else {
        e.text += doc_[pos_++];
      }
    }
  }

  std::string_view doc_;
  std::size_t pos_ = 0;
};

}  // namespace

Element parse(std::string_view document) { return Reader(document).document(); }

}  // namespace cellcount::xml
