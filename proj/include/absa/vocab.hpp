#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace absa {

// Token/id table. Id 0 is the reserved padding symbol and always maps to the
// all-zero embedding row; id 1 is the shared out-of-vocabulary entry used for
// tokens first seen after the vocabulary was built.
class Vocabulary {
 public:
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary();

  // Returns the id for the token, inserting it if new. The pad token is never
  // inserted as a regular entry.
  int add(const std::string& token);

  // Lookup without insertion; unseen tokens map to the unk id.
  int id_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token_of(int id) const;

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int pad_id() const { return 0; }
  int unk_id() const { return 1; }

  // On-disk form: one token per line, id = line index + 1 (id 0 is implicit).
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace absa
