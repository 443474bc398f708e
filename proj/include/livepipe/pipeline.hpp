#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>

#include "livepipe/errors.hpp"
#include "livepipe/latent.hpp"

namespace livepipe {

// Bounded blocking FIFO between two workers. close() wakes every waiter;
// after it, send fails and recv drains what is left, then returns nullopt.
template <typename T>
class Channel {
 public:
  explicit Channel(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  bool send(T value) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || queue_.size() < capacity_; });
    if (closed_) return false;
    queue_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> recv() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !queue_.empty(); });
    if (queue_.empty()) return std::nullopt;
    T value = std::move(queue_.front());
    queue_.pop_front();
    not_full_.notify_one();
    return value;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> queue_;
  bool closed_ = false;
};

// What crosses a stage boundary: the latent and its bookkeeping. KV never
// does; each stage's cache stays with the stage.
struct StageMessage {
  LatentBlock block;
  std::int64_t block_index = 0;
  int producer = 0;
  std::uint64_t sequence = 0;
  double ready_time = 0.0;  // virtual clock: when the producer finished
};

// Receiving end of a link that checks per-link FIFO discipline: messages
// come from the expected producer, in block order, with increasing
// sequence numbers.
class StageLink {
 public:
  StageLink(int producer, std::size_t capacity) : producer_(producer), channel_(capacity) {}

  bool send(StageMessage msg) { return channel_.send(std::move(msg)); }

  std::optional<StageMessage> recv(std::int64_t expected_block) {
    auto msg = channel_.recv();
    if (!msg) return msg;
    if (msg->producer != producer_) {
      throw InvariantError("link " + std::to_string(producer_) + ": message from stage " +
                           std::to_string(msg->producer));
    }
    if (msg->block_index != expected_block || msg->block.block_index != expected_block) {
      throw InvariantError("link " + std::to_string(producer_) + ": expected block " +
                           std::to_string(expected_block) + ", got " +
                           std::to_string(msg->block_index));
    }
    if (received_ > 0 && msg->sequence <= last_sequence_) {
      throw InvariantError("link " + std::to_string(producer_) + ": sequence went backwards");
    }
    last_sequence_ = msg->sequence;
    ++received_;
    return msg;
  }

  void close() { channel_.close(); }
  std::uint64_t received() const { return received_; }

 private:
  int producer_;
  Channel<StageMessage> channel_;
  std::uint64_t last_sequence_ = 0;
  std::uint64_t received_ = 0;
};

// One-shot fan-out of the AAS sink from the decoder to every denoise stage.
// Each consumer takes it exactly once.
class SinkBroadcast {
 public:
  explicit SinkBroadcast(int consumers) : remaining_(consumers) {}

  void publish(LatentFrame sink, double ready_time) {
    {
      std::lock_guard lock(mu_);
      if (value_) throw InvariantError("sink broadcast published twice");
      value_ = std::move(sink);
      ready_time_ = ready_time;
    }
    cv_.notify_all();
  }

  // Blocks until published; nullopt if cancelled first.
  std::optional<std::pair<LatentFrame, double>> consume() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return cancelled_ || value_.has_value(); });
    if (!value_) return std::nullopt;
    if (remaining_ <= 0) throw InvariantError("sink broadcast consumed more than once per stage");
    --remaining_;
    return std::pair{*value_, ready_time_};
  }

  void cancel() {
    {
      std::lock_guard lock(mu_);
      cancelled_ = true;
    }
    cv_.notify_all();
  }

  int remaining() const {
    std::lock_guard lock(mu_);
    return remaining_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<LatentFrame> value_;
  double ready_time_ = 0.0;
  int remaining_;
  bool cancelled_ = false;
};

}  // namespace livepipe
