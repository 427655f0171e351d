#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "qdnet/config.hpp"

namespace qdnet {

// Record of one provisioning action, for stage accounting and tests.
struct ActionRecord {
    std::string stage;
    std::string host;
    std::string action;
};

struct CommandResult {
    int exit_code = -1;
    std::string output;
};

// Generic remote-execution interface: copy artifacts, run commands, spawn
// and probe long-lived processes on a host.
class RemoteExecutor {
   public:
    virtual ~RemoteExecutor() = default;

    virtual CommandResult run(const HostDecl& host,
                              const std::vector<std::string>& argv) = 0;
    // Detached process; stdout/stderr appended to log_path when non-empty.
    virtual int64_t spawn(const HostDecl& host,
                          const std::vector<std::string>& argv,
                          const std::string& log_path) = 0;
    virtual bool alive(const HostDecl& host, int64_t pid) = 0;
    virtual void terminate(const HostDecl& host, int64_t pid) = 0;
    virtual void copy_file(const HostDecl& host, const std::string& src,
                           const std::string& dst) = 0;

    void note(const std::string& stage, const HostDecl& host,
              const std::string& action);
    std::vector<ActionRecord> actions() const;
    void clear_actions();

   private:
    mutable std::mutex mutex_;
    std::vector<ActionRecord> actions_;
};

// connection: local — actions run as subprocesses on this machine.
class LocalExecutor : public RemoteExecutor {
   public:
    CommandResult run(const HostDecl& host,
                      const std::vector<std::string>& argv) override;
    int64_t spawn(const HostDecl& host, const std::vector<std::string>& argv,
                  const std::string& log_path) override;
    bool alive(const HostDecl& host, int64_t pid) override;
    void terminate(const HostDecl& host, int64_t pid) override;
    void copy_file(const HostDecl& host, const std::string& src,
                   const std::string& dst) override;
};

// connection: ssh — actions run over an ssh/scp session.
class SshExecutor : public RemoteExecutor {
   public:
    CommandResult run(const HostDecl& host,
                      const std::vector<std::string>& argv) override;
    int64_t spawn(const HostDecl& host, const std::vector<std::string>& argv,
                  const std::string& log_path) override;
    bool alive(const HostDecl& host, int64_t pid) override;
    void terminate(const HostDecl& host, int64_t pid) override;
    void copy_file(const HostDecl& host, const std::string& src,
                   const std::string& dst) override;

    std::vector<std::string> ssh_argv(const HostDecl& host) const;
};

// Picks the executor matching the host's connection mode.
class DispatchingExecutor : public RemoteExecutor {
   public:
    CommandResult run(const HostDecl& host,
                      const std::vector<std::string>& argv) override;
    int64_t spawn(const HostDecl& host, const std::vector<std::string>& argv,
                  const std::string& log_path) override;
    bool alive(const HostDecl& host, int64_t pid) override;
    void terminate(const HostDecl& host, int64_t pid) override;
    void copy_file(const HostDecl& host, const std::string& src,
                   const std::string& dst) override;

   private:
    RemoteExecutor& pick(const HostDecl& host);
    LocalExecutor local_;
    SshExecutor ssh_;
};

}  // namespace qdnet
