#include "absa/vocab.hpp"

#include <fstream>
#include <sstream>

#include "absa/common.hpp"

namespace absa {

Vocabulary::Vocabulary() {
  id_to_token_.push_back(kPadToken);
  id_to_token_.push_back(kUnkToken);
  token_to_id_[kUnkToken] = 1;
}

int Vocabulary::add(const std::string& token) {
  if (token == kPadToken) return 0;
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  int id = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back(token);
  token_to_id_.emplace(token, id);
  return id;
}

int Vocabulary::id_of(std::string_view token) const {
  if (token == kPadToken) return 0;
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? unk_id() : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token == kPadToken || token_to_id_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) throw DataError("vocabulary id out of range");
  return id_to_token_[static_cast<size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
  std::ostringstream out;
  for (size_t i = 1; i < id_to_token_.size(); ++i) out << id_to_token_[i] << "\n";
  write_file(path, out.str());
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      if (line != kUnkToken)
        throw DataError("vocabulary file " + path + " does not start with the reserved " +
                        std::string(kUnkToken) + " entry");
      first = false;
      continue;
    }
    if (!line.empty()) v.add(line);
  }
  if (first) throw DataError("vocabulary file is empty: " + path);
  return v;
}

}  // namespace absa
