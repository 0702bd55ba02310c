#include "setupx/docker_sandbox.hpp"

#include <chrono>
#include <cstring>

#include <httplib.h>

#include "setupx/errors.hpp"

namespace setupx {

namespace {

std::string json_escape_free(const std::string& s) { return nlohmann::json(s).dump(); }

}  // namespace

DockerSandbox::DockerSandbox(Options options) : options_(std::move(options)) {}

DockerSandbox::~DockerSandbox() {
    try {
        if (live_) remove_container();
        for (const auto& frame : stack_) discard_state(frame.snapshot_id);
    } catch (...) {
        // destructor cleanup is best effort
    }
}

std::string DockerSandbox::post_json(const std::string& path, const nlohmann::json& body,
                                     int expected_status, double timeout_s) {
    httplib::Client client(options_.engine_url);
    double t = timeout_s > 0 ? timeout_s : options_.request_timeout_s;
    client.set_connection_timeout(std::chrono::duration<double>(options_.request_timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(t));
    client.set_write_timeout(std::chrono::duration<double>(t));
    auto res = body.is_null() ? client.Post(path, "", "application/json")
                              : client.Post(path, body.dump(), "application/json");
    if (!res) throw SandboxDead("engine unreachable at " + options_.engine_url + path + ": " +
                                httplib::to_string(res.error()));
    if (res->status != expected_status && !(res->status >= 200 && res->status < 300))
        throw SandboxDead("engine returned HTTP " + std::to_string(res->status) + " for " + path +
                          ": " + res->body);
    return res->body;
}

std::string DockerSandbox::get_json(const std::string& path) {
    httplib::Client client(options_.engine_url);
    client.set_connection_timeout(std::chrono::duration<double>(options_.request_timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(options_.request_timeout_s));
    auto res = client.Get(path);
    if (!res) throw SandboxDead("engine unreachable at " + options_.engine_url + path);
    if (res->status < 200 || res->status >= 300)
        throw SandboxDead("engine returned HTTP " + std::to_string(res->status) + " for " + path);
    return res->body;
}

void DockerSandbox::delete_path(const std::string& path) {
    httplib::Client client(options_.engine_url);
    client.set_connection_timeout(std::chrono::duration<double>(options_.request_timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(options_.request_timeout_s));
    client.Delete(path);  // failures here are non-fatal (already gone)
}

void DockerSandbox::create_and_start(const std::string& image) {
    nlohmann::json create = {
        {"Image", image},
        {"Cmd", {"sleep", "infinity"}},
        {"WorkingDir", options_.workdir},
        {"HostConfig", {{"AutoRemove", false}}},
    };
    nlohmann::json created = nlohmann::json::parse(post_json("/containers/create", create, 201));
    container_id_ = created.at("Id").get<std::string>();
    post_json("/containers/" + container_id_ + "/start", nlohmann::json(), 204);
    live_ = true;
}

void DockerSandbox::provision() {
    create_and_start(options_.base_image);
    // seed the cwd marker so exec wrapping starts in the workdir
    exec("mkdir -p " + options_.workdir, 30.0);
}

void DockerSandbox::remove_container() {
    if (container_id_.empty()) return;
    delete_path("/containers/" + container_id_ + "?force=true");
    container_id_.clear();
    live_ = false;
}

void DockerSandbox::demux_stream(const std::string& body, std::string& out, std::string& err) {
    // Attach stream frames: 1 byte stream id, 3 zero bytes, 4 byte big-endian
    // length, payload. Non-framed bodies (TTY mode) map entirely to stdout.
    std::size_t pos = 0;
    bool framed = body.size() >= 8 && (body[0] == 0 || body[0] == 1 || body[0] == 2) &&
                  body[1] == 0 && body[2] == 0 && body[3] == 0;
    if (!framed) {
        out = body;
        return;
    }
    while (pos + 8 <= body.size()) {
        unsigned char stream = static_cast<unsigned char>(body[pos]);
        std::uint32_t length = (static_cast<std::uint32_t>(static_cast<unsigned char>(body[pos + 4])) << 24) |
                               (static_cast<std::uint32_t>(static_cast<unsigned char>(body[pos + 5])) << 16) |
                               (static_cast<std::uint32_t>(static_cast<unsigned char>(body[pos + 6])) << 8) |
                               static_cast<std::uint32_t>(static_cast<unsigned char>(body[pos + 7]));
        pos += 8;
        std::size_t take = std::min<std::size_t>(length, body.size() - pos);
        if (stream == 2)
            err.append(body, pos, take);
        else
            out.append(body, pos, take);
        pos += take;
    }
}

ExecResult DockerSandbox::exec(const std::string& command, double timeout_s) {
    if (!live_) throw SandboxDead("container not provisioned");
    const auto started = std::chrono::steady_clock::now();

    // Working directory persists across execs via a marker file, so `cd`
    // inside a command carries over like in the simulator.
    std::string script = "cd \"$(cat /tmp/.setupx_cwd 2>/dev/null || echo " + options_.workdir +
                         ")\" 2>/dev/null || cd /\n" + command +
                         "\nrc=$?\npwd > /tmp/.setupx_cwd 2>/dev/null\nexit $rc";
    nlohmann::json cmd;
    if (options_.wrap_with_timeout) {
        cmd = {"timeout", std::to_string(static_cast<long long>(timeout_s)), "/bin/sh", "-c",
               script};
    } else {
        cmd = {"/bin/sh", "-c", script};
    }

    nlohmann::json env = nlohmann::json::array();
    for (const auto& [key, value] : env_) env.push_back(key + "=" + value);
    nlohmann::json create = {{"AttachStdout", true},
                             {"AttachStderr", true},
                             {"Tty", false},
                             {"Env", env},
                             {"Cmd", cmd}};
    nlohmann::json created = nlohmann::json::parse(
        post_json("/containers/" + container_id_ + "/exec", create, 201));
    std::string exec_id = created.at("Id").get<std::string>();

    // The start call blocks until the command finishes; allow headroom past
    // the in-container timeout.
    ExecResult result;
    std::string body;
    try {
        body = post_json("/exec/" + exec_id + "/start",
                         nlohmann::json{{"Detach", false}, {"Tty", false}}, 200,
                         timeout_s + 30.0);
    } catch (const SandboxDead& e) {
        // a transport timeout here outlived the in-container timeout wrapper
        result.exit_code = kTimeoutExitCode;
        result.stderr_text = e.what();
        result.duration_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        return result;
    }
    demux_stream(body, result.stdout_text, result.stderr_text);
    nlohmann::json inspect = nlohmann::json::parse(get_json("/exec/" + exec_id + "/json"));
    result.exit_code = inspect.value("ExitCode", kTimeoutExitCode);
    result.duration_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

void DockerSandbox::set_env(const std::string& key, const std::string& value) {
    if (key.empty() || key.find('=') != std::string::npos) throw InvalidKey(key);
    env_[key] = value;
}

std::string DockerSandbox::commit_image(const std::string& tag) {
    if (!live_) throw SandboxDead("container not provisioned");
    std::string body = post_json(
        "/commit?container=" + container_id_ + "&repo=" + options_.snapshot_repo + "&tag=" + tag,
        nlohmann::json::object(), 201);
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_object() && j.contains("Id")) return j.at("Id").get<std::string>();
    return options_.snapshot_repo + ":" + tag;
}

std::string DockerSandbox::capture_state(const std::string&) {
    std::string tag = "snap-" + std::to_string(next_snapshot_++);
    commit_image(tag);
    return options_.snapshot_repo + ":" + tag;
}

void DockerSandbox::restore_state(const std::string& snapshot_id) {
    remove_container();
    create_and_start(snapshot_id);
}

void DockerSandbox::discard_state(const std::string& snapshot_id) {
    delete_path("/images/" + snapshot_id + "?force=true");
}

}  // namespace setupx
