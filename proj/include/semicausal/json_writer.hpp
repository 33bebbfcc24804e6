#pragma once

#include <string>
#include <vector>

namespace semicausal {

// %.17g — round-trip exact for doubles.
std::string format_double(double x);

// Minimal ordered JSON emitter. Keys appear in insertion order and all
// doubles carry 17 significant digits, so identical inputs produce
// byte-identical documents.
class JsonWriter {
 public:
  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(const std::string& name);
  JsonWriter& value(double v);
  JsonWriter& value(long v);
  JsonWriter& value(int v) { return value(static_cast<long>(v)); }
  JsonWriter& value(unsigned long v);
  JsonWriter& value(bool v);
  JsonWriter& value(const std::string& v);
  JsonWriter& value(const char* v) { return value(std::string(v)); }
  JsonWriter& null_value();

  const std::string& str() const { return out_; }

 private:
  void before_item();
  void indent();

  std::string out_;
  std::vector<bool> has_items_;   // per open container
  std::vector<bool> is_object_;
  bool pending_key_ = false;
};

// Write content to `path` via a temp file + rename in the same directory.
void atomic_write(const std::string& path, const std::string& content);

}  // namespace semicausal
