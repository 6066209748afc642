#pragma once

#include <memory>
#include <optional>
#include <string>
#include <sys/types.h>
#include <vector>

#include "negsynth/backends.hpp"

namespace negsynth {

// Byte-stream transport carrying newline-delimited records. Lines never
// contain raw newlines (JSON escapes them).
class LineChannel {
  public:
    virtual ~LineChannel() = default;
    virtual void write_line(const std::string& line) = 0;
    // Next line without its terminator; nullopt on EOF.
    virtual std::optional<std::string> read_line() = 0;
};

// Channel over a pair of POSIX file descriptors. Takes ownership when
// owns_fds is set (closes on destruction).
class FdChannel : public LineChannel {
  public:
    FdChannel(int read_fd, int write_fd, bool owns_fds);
    ~FdChannel() override;
    FdChannel(const FdChannel&) = delete;
    FdChannel& operator=(const FdChannel&) = delete;

    void write_line(const std::string& line) override;
    std::optional<std::string> read_line() override;

  private:
    int read_fd_;
    int write_fd_;
    bool owns_fds_;
    std::string buffer_;
    bool eof_ = false;
};

// Spawns `argv` with its stdin/stdout bridged to this channel; waits for
// the child on destruction. The server side of the conversation is
// expected to be this program's own `serve` command or a compatible one.
class SubprocessChannel : public LineChannel {
  public:
    explicit SubprocessChannel(const std::vector<std::string>& argv);
    ~SubprocessChannel() override;

    void write_line(const std::string& line) override;
    std::optional<std::string> read_line() override;

  private:
    std::unique_ptr<FdChannel> pipes_;
    pid_t child_ = -1;
};

// Wire format: request {"op": ..., "inputs": {...}}, response
// {"outputs": {...}} or {"error": "message"}.
std::string encode_request(const std::string& op, const std::string& inputs_json);
// Returns the outputs object's JSON text; raises BackendError on an
// error response or a malformed line.
std::string decode_response(const std::string& line);

// Client adapters. All calls are synchronous request/response over one
// shared channel, so every adapter declares concurrent_safe() = false.
class RemoteQaBackend : public QaBackend {
  public:
    RemoteQaBackend(std::shared_ptr<LineChannel> channel, Task task);

    Prediction predict(const std::string& query, const std::string& context) override;
    TrainResult train_batch(std::span<const WeightedExample> examples) override;
    std::string clone_state() const override;
    void restore_state(const std::string& state) override;
    bool concurrent_safe() const override { return false; }

  private:
    std::shared_ptr<LineChannel> channel_;
    Task task_;
};

class RemoteInfiller : public Infiller {
  public:
    explicit RemoteInfiller(std::shared_ptr<LineChannel> channel);

    std::string infill(const std::string& masked_text) override;
    bool concurrent_safe() const override { return false; }

  private:
    std::shared_ptr<LineChannel> channel_;
};

class RemoteDetector : public ParaphraseDetector {
  public:
    explicit RemoteDetector(std::shared_ptr<LineChannel> channel);

    ParaphraseVerdict judge(const std::string& a, const std::string& b) override;
    bool concurrent_safe() const override { return false; }

  private:
    std::shared_ptr<LineChannel> channel_;
};

// Server loop: dispatches requests to whichever backends are provided
// (null backends answer with an error response) until EOF. Individual
// request failures are reported in-band; the loop keeps serving.
void serve_backends(LineChannel& channel, QaBackend* qa, Infiller* infiller,
                    ParaphraseDetector* detector);

}  // namespace negsynth
