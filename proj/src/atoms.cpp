#include "setupx/atoms.hpp"

#include <array>
#include <functional>
#include <stdexcept>

#include "setupx/errors.hpp"

namespace setupx {

namespace {

struct AtomSpec {
    AtomKind kind;
    const char* name;
    std::vector<std::string> required;
    std::function<std::string(const std::map<std::string, std::string>&)> render;
};

std::string arg_or(const std::map<std::string, std::string>& args, const std::string& key,
                   const std::string& fallback) {
    auto it = args.find(key);
    if (it == args.end() || it->second.empty()) return fallback;
    return it->second;
}

std::string arg(const std::map<std::string, std::string>& args, const std::string& key) {
    auto it = args.find(key);
    if (it == args.end() || it->second.empty()) throw MissingArg(key);
    return it->second;
}

const std::vector<AtomSpec>& atom_table() {
    static const std::vector<AtomSpec> table = {
        {AtomKind::Shell, "shell", {"cmd"},
         [](const auto& a) { return arg(a, "cmd"); }},
        {AtomKind::InspectFile, "inspect_file", {"path"},
         [](const auto& a) { return "cat " + shell_quote(arg(a, "path")); }},
        {AtomKind::PipInstall, "pip_install", {"package"},
         [](const auto& a) {
             std::string spec = arg(a, "package");
             auto v = a.find("version");
             if (v != a.end() && !v->second.empty()) spec += "==" + v->second;
             return "pip install " + spec;
         }},
        {AtomKind::PipUninstall, "pip_uninstall", {"package"},
         [](const auto& a) { return "pip uninstall -y " + arg(a, "package"); }},
        {AtomKind::AptInstall, "apt_install", {"package"},
         [](const auto& a) { return "apt-get install -y " + arg(a, "package"); }},
        {AtomKind::SetEnv, "set_env", {"key"},
         [](const auto& a) { return "export " + arg(a, "key") + "=" + shell_quote(arg_or(a, "value", "")); }},
        {AtomKind::WriteFile, "write_file", {"path"},
         [](const auto& a) {
             return "printf '%s' " + shell_quote(arg_or(a, "content", "")) + " > " +
                    shell_quote(arg(a, "path"));
         }},
        {AtomKind::GitClone, "git_clone", {"url"},
         [](const auto& a) {
             std::string cmd = "git clone " + shell_quote(arg(a, "url"));
             auto d = a.find("dest");
             if (d != a.end() && !d->second.empty()) cmd += " " + shell_quote(d->second);
             return cmd;
         }},
        {AtomKind::CreateVenv, "create_venv", {},
         [](const auto& a) {
             return arg_or(a, "python", "python3") + " -m venv " + shell_quote(arg_or(a, "path", ".venv"));
         }},
        {AtomKind::PoetryInstall, "poetry_install", {},
         [](const auto& a) {
             std::string cmd = "poetry install --no-interaction";
             auto extra = a.find("args");
             if (extra != a.end() && !extra->second.empty()) cmd += " " + extra->second;
             return cmd;
         }},
        {AtomKind::Download, "download", {"url"},
         [](const auto& a) {
             std::string url = arg(a, "url");
             auto d = a.find("dest");
             if (d != a.end() && !d->second.empty())
                 return "curl -fsSL " + shell_quote(url) + " -o " + shell_quote(d->second);
             return "curl -fsSLO " + shell_quote(url);
         }},
        {AtomKind::MakeBuild, "make_build", {},
         [](const auto& a) {
             std::string cmd = "make";
             auto dir = a.find("dir");
             if (dir != a.end() && !dir->second.empty()) cmd += " -C " + shell_quote(dir->second);
             auto target = a.find("target");
             if (target != a.end() && !target->second.empty()) cmd += " " + target->second;
             return cmd;
         }},
    };
    return table;
}

const AtomSpec& spec_for(AtomKind kind) {
    for (const auto& spec : atom_table())
        if (spec.kind == kind) return spec;
    throw UnknownAtomKind("#" + std::to_string(static_cast<int>(kind)));
}

std::string substitute_placeholders(const std::string& value,
                                    const std::map<std::string, std::string>& ctx) {
    if (ctx.empty()) return value;
    std::string out = value;
    for (const auto& [key, replacement] : ctx) {
        const std::string needle = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), replacement);
            pos += replacement.size();
        }
    }
    return out;
}

}  // namespace

const std::string& atom_kind_name(AtomKind kind) {
    static std::map<AtomKind, std::string> names = [] {
        std::map<AtomKind, std::string> m;
        for (const auto& spec : atom_table()) m[spec.kind] = spec.name;
        return m;
    }();
    return names.at(kind);
}

AtomKind atom_kind_from_name(const std::string& name) {
    for (const auto& spec : atom_table())
        if (name == spec.name) return spec.kind;
    throw UnknownAtomKind(name);
}

const std::vector<AtomKind>& all_atom_kinds() {
    static std::vector<AtomKind> kinds = [] {
        std::vector<AtomKind> k;
        for (const auto& spec : atom_table()) k.push_back(spec.kind);
        return k;
    }();
    return kinds;
}

const std::vector<std::string>& atom_required_args(AtomKind kind) {
    return spec_for(kind).required;
}

void validate_atom(const Atom& atom) {
    const auto& spec = spec_for(atom.kind);
    for (const auto& name : spec.required) {
        auto it = atom.args.find(name);
        if (it == atom.args.end() || it->second.empty()) throw MissingArg(name);
    }
}

std::string render_atom(const Atom& atom, const std::map<std::string, std::string>& ctx) {
    const auto& spec = spec_for(atom.kind);
    std::map<std::string, std::string> resolved;
    for (const auto& [key, value] : atom.args) resolved[key] = substitute_placeholders(value, ctx);
    for (const auto& name : spec.required) {
        auto it = resolved.find(name);
        if (it == resolved.end() || it->second.empty()) throw MissingArg(name);
    }
    return spec.render(resolved);
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    out += "'";
    return out;
}

}  // namespace setupx
