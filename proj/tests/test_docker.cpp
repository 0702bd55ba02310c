#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "setupx/docker_sandbox.hpp"
#include "setupx/errors.hpp"

using namespace setupx;

namespace {

std::string frame(unsigned char stream, const std::string& payload) {
    std::string out;
    out.push_back(static_cast<char>(stream));
    out.append(3, '\0');
    std::uint32_t n = static_cast<std::uint32_t>(payload.size());
    out.push_back(static_cast<char>((n >> 24) & 0xff));
    out.push_back(static_cast<char>((n >> 16) & 0xff));
    out.push_back(static_cast<char>((n >> 8) & 0xff));
    out.push_back(static_cast<char>(n & 0xff));
    out += payload;
    return out;
}

// Minimal container engine: containers carry one mutable "marker" string,
// commits freeze it into images, exec interprets a few magic commands.
struct FakeEngine {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    std::mutex mutex;
    std::map<std::string, std::string> containers;  // id -> marker
    std::map<std::string, std::string> images;      // ref -> marker
    struct PendingExec {
        std::string container;
        std::string script;
        std::string env;
        int exit_code = 0;
    };
    std::map<std::string, PendingExec> execs;
    int next_id = 1;
    int removed_images = 0;

    FakeEngine() {
        images["base:latest"] = "clean";

        server.Post("/containers/create", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
            std::lock_guard lock(mutex);
            auto body = nlohmann::json::parse(req.body);
            std::string image = body.at("Image").get<std::string>();
            std::string id = "c" + std::to_string(next_id++);
            containers[id] = images.count(image) ? images[image] : "clean";
            res.status = 201;
            res.set_content(nlohmann::json{{"Id", id}}.dump(), "application/json");
        });

        server.Post(R"(/containers/([^/]+)/start)", [](const httplib::Request&,
                                                       httplib::Response& res) {
            res.status = 204;
        });

        server.Post(R"(/containers/([^/]+)/exec)", [this](const httplib::Request& req,
                                                          httplib::Response& res) {
            std::lock_guard lock(mutex);
            auto body = nlohmann::json::parse(req.body);
            PendingExec pending;
            pending.container = req.matches[1];
            for (const auto& part : body.at("Cmd")) pending.script += part.get<std::string>() + "\n";
            for (const auto& e : body.value("Env", nlohmann::json::array()))
                pending.env += e.get<std::string>() + ";";
            std::string id = "e" + std::to_string(next_id++);
            execs[id] = pending;
            res.status = 201;
            res.set_content(nlohmann::json{{"Id", id}}.dump(), "application/json");
        });

        server.Post(R"(/exec/([^/]+)/start)", [this](const httplib::Request& req,
                                                     httplib::Response& res) {
            std::lock_guard lock(mutex);
            PendingExec& pending = execs.at(req.matches[1]);
            std::string out, err;
            if (pending.script.find("touch marker") != std::string::npos) {
                containers[pending.container] = "mutated";
            } else if (pending.script.find("read marker") != std::string::npos) {
                out = containers[pending.container];
            } else if (pending.script.find("show env") != std::string::npos) {
                out = pending.env;
            } else if (pending.script.find("warn") != std::string::npos) {
                out = "to stdout";
                err = "to stderr";
            } else if (pending.script.find("fail") != std::string::npos) {
                pending.exit_code = 3;
                err = "boom";
            }
            std::string body;
            if (!out.empty()) body += frame(1, out);
            if (!err.empty()) body += frame(2, err);
            res.status = 200;
            res.set_content(body, "application/vnd.docker.raw-stream");
        });

        server.Get(R"(/exec/([^/]+)/json)", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
            std::lock_guard lock(mutex);
            res.set_content(
                nlohmann::json{{"ExitCode", execs.at(req.matches[1]).exit_code},
                               {"Running", false}}
                    .dump(),
                "application/json");
        });

        server.Post("/commit", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mutex);
            std::string container = req.get_param_value("container");
            std::string ref = req.get_param_value("repo") + ":" + req.get_param_value("tag");
            images[ref] = containers[container];
            res.status = 201;
            res.set_content(nlohmann::json{{"Id", ref}}.dump(), "application/json");
        });

        server.Delete(R"(/containers/([^/]+))", [this](const httplib::Request& req,
                                                       httplib::Response& res) {
            std::lock_guard lock(mutex);
            containers.erase(req.matches[1]);
            res.status = 204;
        });

        server.Delete(R"(/images/(.+))", [this](const httplib::Request& req,
                                                httplib::Response& res) {
            std::lock_guard lock(mutex);
            std::string ref = req.matches[1];
            auto query = ref.find('?');
            if (query != std::string::npos) ref = ref.substr(0, query);
            images.erase(ref);
            ++removed_images;
            res.status = 200;
        });

        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~FakeEngine() {
        server.stop();
        thread.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

DockerSandbox::Options options_for(const FakeEngine& engine) {
    DockerSandbox::Options options;
    options.engine_url = engine.url();
    options.base_image = "base:latest";
    options.wrap_with_timeout = false;  // the fake does not run a real shell
    return options;
}

}  // namespace

TEST_CASE("demux splits framed attach streams and passes raw bodies through") {
    std::string body = frame(1, "hello ") + frame(2, "warning") + frame(1, "world");
    std::string out, err;
    DockerSandbox::demux_stream(body, out, err);
    CHECK(out == "hello world");
    CHECK(err == "warning");

    out.clear();
    err.clear();
    DockerSandbox::demux_stream("plain tty text", out, err);
    CHECK(out == "plain tty text");
    CHECK(err.empty());
}

TEST_CASE("exec round-trips commands, env and exit codes through the engine API") {
    FakeEngine engine;
    DockerSandbox sandbox(options_for(engine));
    sandbox.provision();

    ExecResult read = sandbox.exec("read marker");
    CHECK(read.exit_code == 0);
    CHECK(read.stdout_text == "clean");

    ExecResult split = sandbox.exec("warn");
    CHECK(split.stdout_text == "to stdout");
    CHECK(split.stderr_text == "to stderr");

    CHECK(sandbox.exec("fail now").exit_code == 3);

    sandbox.set_env("FOO", "bar");
    CHECK(sandbox.exec("show env").stdout_text.find("FOO=bar") != std::string::npos);
    CHECK_THROWS_AS(sandbox.set_env("A=B", "x"), InvalidKey);
}

TEST_CASE("checkpoints commit images and rollback relaunches from them") {
    FakeEngine engine;
    DockerSandbox sandbox(options_for(engine));
    sandbox.provision();

    CHECK(sandbox.push_checkpoint("known-good") == 1);
    sandbox.exec("touch marker");
    CHECK(sandbox.exec("read marker").stdout_text == "mutated");

    Snapshot restored = sandbox.rollback(1);
    CHECK(restored.label == "known-good");
    CHECK(sandbox.stack_depth() == 0);
    CHECK(sandbox.exec("read marker").stdout_text == "clean");
    CHECK(engine.removed_images >= 1);  // discarded frames delete their images
}

TEST_CASE("the five-stage trial works against the engine backend too") {
    FakeEngine engine;
    DockerSandbox sandbox(options_for(engine));
    sandbox.provision();

    TrialOutcome bad = sandbox.trial({"touch marker", "fail"});
    CHECK(bad.status == TrialStatus::Failure);
    CHECK(sandbox.stack_depth() == 0);
    CHECK(sandbox.exec("read marker").stdout_text == "clean");  // restored

    TrialOutcome good = sandbox.trial({"touch marker"});
    CHECK(good.status == TrialStatus::Success);
    CHECK(sandbox.stack_depth() == 1);
    CHECK(sandbox.exec("read marker").stdout_text == "mutated");
}

TEST_CASE("an unreachable engine raises SandboxDead") {
    DockerSandbox::Options options;
    options.engine_url = "http://127.0.0.1:1";  // nothing listens here
    options.request_timeout_s = 0.2;
    DockerSandbox sandbox(options);
    CHECK_THROWS_AS(sandbox.provision(), SandboxDead);
    CHECK_THROWS_AS(sandbox.exec("true"), SandboxDead);
}
