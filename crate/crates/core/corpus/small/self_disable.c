// The handler masks its own source after a burst.
uint8 INT0_EN @ 0x3D.0;
volatile uint8 burst;
uint8 rounds;

ISR(INT0_vect) {
    burst = burst + 1;
    if (burst >= 2) {
        INT0_EN = 0;
    }
}

void main() {
    INT0_EN = 1;
    while (rounds < 2) {
        if (INT0_EN == 0) {
            cli();
            burst = 0;
            sei();
            rounds = rounds + 1;
            INT0_EN = 1;
        }
    }
}
