#include "negsynth/remote.hpp"

#include <cerrno>
#include <cstring>
#include <stdexcept>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"
#include "negsynth/corpus.hpp"

namespace negsynth {

using nlohmann::json;

FdChannel::FdChannel(int read_fd, int write_fd, bool owns_fds)
    : read_fd_(read_fd), write_fd_(write_fd), owns_fds_(owns_fds) {}

FdChannel::~FdChannel() {
    if (owns_fds_) {
        ::close(read_fd_);
        if (write_fd_ != read_fd_) ::close(write_fd_);
    }
}

void FdChannel::write_line(const std::string& line) {
    std::string out = line;
    out.push_back('\n');
    size_t written = 0;
    while (written < out.size()) {
        ssize_t n = ::write(write_fd_, out.data() + written, out.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw BackendError(std::string("channel write failed: ") + std::strerror(errno));
        }
        written += static_cast<size_t>(n);
    }
}

std::optional<std::string> FdChannel::read_line() {
    for (;;) {
        auto newline = buffer_.find('\n');
        if (newline != std::string::npos) {
            std::string line = buffer_.substr(0, newline);
            buffer_.erase(0, newline + 1);
            return line;
        }
        if (eof_) {
            if (buffer_.empty()) return std::nullopt;
            std::string line = std::move(buffer_);
            buffer_.clear();
            return line;
        }
        char chunk[4096];
        ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
        if (n < 0) {
            if (errno == EINTR) continue;
            throw BackendError(std::string("channel read failed: ") + std::strerror(errno));
        }
        if (n == 0) {
            eof_ = true;
            continue;
        }
        buffer_.append(chunk, static_cast<size_t>(n));
    }
}

SubprocessChannel::SubprocessChannel(const std::vector<std::string>& argv) {
    if (argv.empty()) throw std::invalid_argument("SubprocessChannel: empty argv");
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) {
        throw BackendError(std::string("pipe failed: ") + std::strerror(errno));
    }
    child_ = ::fork();
    if (child_ < 0) throw BackendError(std::string("fork failed: ") + std::strerror(errno));
    if (child_ == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::close(to_child[0]);
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::close(from_child[1]);
        std::vector<char*> args;
        args.reserve(argv.size() + 1);
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        ::execvp(args[0], args.data());
        // Only reached when exec fails; report on the pipe as a protocol
        // error and die without running atexit handlers.
        std::string msg = "{\"error\":\"exec failed\"}\n";
        [[maybe_unused]] ssize_t ignored = ::write(STDOUT_FILENO, msg.data(), msg.size());
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    pipes_ = std::make_unique<FdChannel>(from_child[0], to_child[1], /*owns_fds=*/true);
}

SubprocessChannel::~SubprocessChannel() {
    pipes_.reset();  // closing the child's stdin ends its serve loop
    if (child_ > 0) {
        int status = 0;
        ::waitpid(child_, &status, 0);
    }
}

void SubprocessChannel::write_line(const std::string& line) { pipes_->write_line(line); }

std::optional<std::string> SubprocessChannel::read_line() { return pipes_->read_line(); }

std::string encode_request(const std::string& op, const std::string& inputs_json) {
    json j;
    j["op"] = op;
    j["inputs"] = json::parse(inputs_json);
    return j.dump();
}

std::string decode_response(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw BackendError(std::string("malformed response line: ") + e.what());
    }
    if (j.contains("error")) {
        throw BackendError("remote backend error: " + j.at("error").get<std::string>());
    }
    if (!j.contains("outputs")) throw BackendError("response missing outputs");
    return j.at("outputs").dump();
}

namespace {

json roundtrip(LineChannel& channel, const std::string& op, const json& inputs) {
    channel.write_line(encode_request(op, inputs.dump()));
    auto line = channel.read_line();
    if (!line) throw BackendError("remote backend closed the channel");
    return json::parse(decode_response(*line));
}

}  // namespace

RemoteQaBackend::RemoteQaBackend(std::shared_ptr<LineChannel> channel, Task task)
    : channel_(std::move(channel)), task_(task) {}

Prediction RemoteQaBackend::predict(const std::string& query, const std::string& context) {
    json inputs;
    inputs["query"] = query;
    inputs["context"] = context;
    json outputs = roundtrip(*channel_, "predict", inputs);
    Prediction pred;
    pred.label = label_from_json_string(outputs.at("label").dump());
    pred.confidence = outputs.at("confidence").get<double>();
    if (pred.confidence < 0.0 || pred.confidence > 1.0) {
        throw BackendError("remote confidence out of [0,1]");
    }
    if (!label_valid_for_task(pred.label, task_)) {
        throw BackendError("remote label outside the task's space");
    }
    return pred;
}

TrainResult RemoteQaBackend::train_batch(std::span<const WeightedExample> examples) {
    json items = json::array();
    for (const auto& weighted : examples) {
        json item;
        item["example"] = json::parse(example_to_json_line(weighted.example));
        item["weight"] = weighted.weight;
        items.push_back(std::move(item));
    }
    json inputs;
    inputs["examples"] = std::move(items);
    json outputs = roundtrip(*channel_, "train_batch", inputs);
    TrainResult result;
    result.loss = outputs.at("loss").get<double>();
    result.per_example = outputs.at("per_example").get<std::vector<double>>();
    return result;
}

std::string RemoteQaBackend::clone_state() const {
    json outputs = roundtrip(*channel_, "clone_state", json::object());
    return outputs.at("state").get<std::string>();
}

void RemoteQaBackend::restore_state(const std::string& state) {
    json inputs;
    inputs["state"] = state;
    roundtrip(*channel_, "restore_state", inputs);
}

RemoteInfiller::RemoteInfiller(std::shared_ptr<LineChannel> channel)
    : channel_(std::move(channel)) {}

std::string RemoteInfiller::infill(const std::string& masked_text) {
    json inputs;
    inputs["text"] = masked_text;
    json outputs = roundtrip(*channel_, "infill", inputs);
    auto text = outputs.at("text").get<std::string>();
    if (text.empty()) throw BackendError("remote infiller returned empty text");
    return text;
}

RemoteDetector::RemoteDetector(std::shared_ptr<LineChannel> channel)
    : channel_(std::move(channel)) {}

ParaphraseVerdict RemoteDetector::judge(const std::string& a, const std::string& b) {
    json inputs;
    inputs["a"] = a;
    inputs["b"] = b;
    json outputs = roundtrip(*channel_, "judge", inputs);
    auto verdict = outputs.at("verdict").get<std::string>();
    if (verdict == "paraphrase") return ParaphraseVerdict::Paraphrase;
    if (verdict == "not_paraphrase") return ParaphraseVerdict::NotParaphrase;
    throw BackendError("remote verdict unrecognized: " + verdict);
}

namespace {

json handle_request(const json& request, QaBackend* qa, Infiller* infiller,
                    ParaphraseDetector* detector) {
    const auto op = request.at("op").get<std::string>();
    const json& inputs = request.at("inputs");
    json outputs;
    if (op == "predict") {
        if (!qa) throw BackendError("no answering backend served");
        Prediction pred = qa->predict(inputs.at("query").get<std::string>(),
                                      inputs.at("context").get<std::string>());
        outputs["label"] = json::parse(label_to_json_string(pred.label));
        outputs["confidence"] = pred.confidence;
    } else if (op == "train_batch") {
        if (!qa) throw BackendError("no answering backend served");
        std::vector<WeightedExample> batch;
        for (const auto& item : inputs.at("examples")) {
            WeightedExample weighted;
            weighted.example = example_from_json_line(item.at("example").dump());
            weighted.weight = item.at("weight").get<double>();
            batch.push_back(std::move(weighted));
        }
        TrainResult result = qa->train_batch(batch);
        outputs["loss"] = result.loss;
        outputs["per_example"] = result.per_example;
    } else if (op == "clone_state") {
        if (!qa) throw BackendError("no answering backend served");
        outputs["state"] = qa->clone_state();
    } else if (op == "restore_state") {
        if (!qa) throw BackendError("no answering backend served");
        qa->restore_state(inputs.at("state").get<std::string>());
    } else if (op == "infill") {
        if (!infiller) throw BackendError("no infiller served");
        outputs["text"] = infiller->infill(inputs.at("text").get<std::string>());
    } else if (op == "judge") {
        if (!detector) throw BackendError("no detector served");
        ParaphraseVerdict verdict = detector->judge(inputs.at("a").get<std::string>(),
                                                    inputs.at("b").get<std::string>());
        outputs["verdict"] =
            verdict == ParaphraseVerdict::Paraphrase ? "paraphrase" : "not_paraphrase";
    } else {
        throw BackendError("unknown op: " + op);
    }
    return outputs;
}

}  // namespace

void serve_backends(LineChannel& channel, QaBackend* qa, Infiller* infiller,
                    ParaphraseDetector* detector) {
    for (;;) {
        auto line = channel.read_line();
        if (!line) return;
        if (line->empty()) continue;
        json response;
        try {
            json request = json::parse(*line);
            response["outputs"] = handle_request(request, qa, infiller, detector);
        } catch (const std::exception& e) {
            response = json{{"error", e.what()}};
        }
        channel.write_line(response.dump());
    }
}

}  // namespace negsynth
