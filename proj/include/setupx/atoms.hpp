#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace setupx {

// The 12 atom kinds understood by the rendering engine. Serialized under the
// "name" field of an atom record.
enum class AtomKind {
    Shell,
    InspectFile,
    PipInstall,
    PipUninstall,
    AptInstall,
    SetEnv,
    WriteFile,
    GitClone,
    CreateVenv,
    PoetryInstall,
    Download,
    MakeBuild,
};

struct Atom {
    AtomKind kind = AtomKind::Shell;
    std::map<std::string, std::string> args;

    bool operator==(const Atom& other) const = default;
};

// Canonical serialized name for a kind ("shell", "pip_install", ...).
const std::string& atom_kind_name(AtomKind kind);

// Inverse of atom_kind_name. Throws UnknownAtomKind.
AtomKind atom_kind_from_name(const std::string& name);

// All kinds, in declaration order.
const std::vector<AtomKind>& all_atom_kinds();

// Required argument names for a kind. Arguments must be present and non-empty.
const std::vector<std::string>& atom_required_args(AtomKind kind);

// Validates required args; throws MissingArg on the first absent/empty one.
void validate_atom(const Atom& atom);

// Renders an atom to a single shell command string. `ctx` values substitute
// `{key}` placeholders inside argument values before rendering. Pure and
// deterministic. Throws UnknownAtomKind / MissingArg.
std::string render_atom(const Atom& atom, const std::map<std::string, std::string>& ctx = {});

// Single-quotes a string for POSIX shells.
std::string shell_quote(const std::string& s);

}  // namespace setupx
