#pragma once

#include <map>
#include <string>

namespace setupx {

// Role prompt templates. Each template is a text file named <key>.txt in the
// prompt directory (setup, retriever_select, retriever_audit, verifier,
// prosecutor, judge, distiller); built-in defaults cover missing files.
// `{name}` placeholders are substituted at render time.
class PromptLibrary {
public:
    PromptLibrary();  // built-in defaults only
    explicit PromptLibrary(const std::string& directory);

    std::string get(const std::string& key) const;
    std::string render(const std::string& key,
                       const std::map<std::string, std::string>& vars) const;

    static std::string substitute(const std::string& text,
                                  const std::map<std::string, std::string>& vars);

private:
    std::map<std::string, std::string> templates_;
};

}  // namespace setupx
