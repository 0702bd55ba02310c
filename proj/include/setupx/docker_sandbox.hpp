#pragma once

#include <map>
#include <string>

#include "setupx/sandbox.hpp"

namespace setupx {

// Container-engine backend. Checkpoints are realized as image commits tagged
// with the snapshot id; restore replaces the running container with one
// launched from the committed image, preserving the recorded working
// directory and environment. Discarded frames delete their images.
class DockerSandbox : public Sandbox {
public:
    struct Options {
        std::string engine_url = "http://127.0.0.1:2375";
        std::string base_image = "ubuntu:22.04";
        std::string workdir = "/workspace";
        std::string snapshot_repo = "setupx-snap";
        double request_timeout_s = 120.0;
        // Commands run under `timeout <s>` inside the container so the
        // sentinel exit code is produced by the container itself.
        bool wrap_with_timeout = true;
    };

    explicit DockerSandbox(Options options);
    ~DockerSandbox() override;

    // Creates and starts the container from the base image. Throws SandboxDead.
    void provision();

    ExecResult exec(const std::string& command, double timeout_s = 300.0) override;
    void set_env(const std::string& key, const std::string& value) override;

    // Commits the current container to <snapshot_repo>:<tag> and returns the
    // image reference; used to hand the final environment to adjudication.
    std::string commit_image(const std::string& tag);

    const std::string& container_id() const { return container_id_; }

    // Splits a Docker attach stream into stdout/stderr. Exposed for tests.
    static void demux_stream(const std::string& body, std::string& out, std::string& err);

protected:
    std::string capture_state(const std::string& label) override;
    void restore_state(const std::string& snapshot_id) override;
    void discard_state(const std::string& snapshot_id) override;

private:
    std::string post_json(const std::string& path, const nlohmann::json& body, int expected_status,
                          double timeout_s = 0.0);
    std::string get_json(const std::string& path);
    void delete_path(const std::string& path);
    void create_and_start(const std::string& image);
    void remove_container();

    Options options_;
    std::string container_id_;
    std::map<std::string, std::string> env_;
    std::uint64_t next_snapshot_ = 1;
    bool live_ = false;
};

}  // namespace setupx
